"""Regenerates kinematics_oracle.csv: random admissible step inputs and the
next state evaluated with 50-digit arithmetic."""

import random

from mpmath import mp, mpf, sin, cos, asin, sqrt, pi

mp.dps = 50
# The f64 values the library actually uses.
B, DT = mpf(2.8), mpf(0.1)


def wrap(a):
    while a > pi:
        a -= 2 * pi
    while a <= -pi:
        a += 2 * pi
    return a


def step(x, y, th, v, a, d):
    x, y, th, v, a, d = map(mpf, (x, y, th, v, a, d))
    g = v * DT * sin(d)
    f = B + v * DT * cos(d) - sqrt(B * B - g * g)
    return (x + f * cos(th), y + f * sin(th), wrap(th + asin(g / B)), v + DT * a)


rng = random.Random(20240611)
rows = ["x,y,heading,v,accel,steer,x1,y1,heading1,v1"]
for _ in range(1000):
    inp = (
        rng.uniform(-200, 200),
        rng.uniform(-200, 200),
        rng.uniform(-3.14159, 3.14159),
        rng.uniform(0, 20),
        rng.uniform(-4, 3),
        rng.uniform(-0.6, 0.6),
    )
    out = step(*inp)
    rows.append(",".join([repr(v) for v in inp] + [mp.nstr(v, 25) for v in out]))

with open("kinematics_oracle.csv", "w") as fh:
    fh.write("\n".join(rows) + "\n")
