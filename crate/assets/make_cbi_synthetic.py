"""Generates cbi_synthetic.csv: a synthetic 60-country panel, 1998-2010.

Per year: inflation Y, growth L1, central bank independence A (binary)
and openness L2. Y_pre_k holds inflation k years before 1998.
"""
import csv
import math
import random

rng = random.Random(20240517)
YEARS = range(1998, 2011)


def expit(x):
    return 1.0 / (1.0 + math.exp(-x))


rows = []
for c in range(1, 61):
    level = rng.gauss(3.0, 1.5)
    pre = []
    y = level + rng.gauss(0.0, 1.0)
    for _ in range(7):
        y = 0.5 * y + 0.5 * level + rng.gauss(0.0, 1.0)
        pre.append(y)
    row = {"unit_id": f"C{c:02d}"}
    for k, v in enumerate(reversed(pre), start=1):
        row[f"Y_pre_{k}"] = round(v, 4)
    a_hist = [0, 0]
    l1_prev, l2_prev, y_prev = 2.0, 0.0, pre[-1]
    for t in YEARS:
        y = 0.5 * y_prev + 0.5 * level - 1.0 * a_hist[-2] + 0.3 * (l1_prev - 2.0) + rng.gauss(0.0, 1.0)
        row[f"Y_{t}"] = round(y, 4)
        if t == 2010:
            break
        l1 = 2.0 - 0.1 * (y - 3.0) + rng.gauss(0.0, 1.0)
        if t == 1998:
            a = int(rng.random() < expit(-0.2 + 0.3 * (y - 3.0)))
        elif a_hist[-1] == 1:
            a = int(rng.random() < 0.97)
        else:
            a = int(rng.random() < expit(-3.0 + 0.3 * (y - 3.0)))
        l2 = 0.5 * l2_prev + 0.2 * a + rng.gauss(0.0, 0.5)
        row[f"L1_{t}"] = round(l1, 4)
        row[f"A_{t}"] = a
        row[f"L2_{t}"] = round(l2, 4)
        a_hist.append(a)
        l1_prev, l2_prev, y_prev = l1, l2, y
    rows.append(row)

header = ["unit_id"]
for t in YEARS:
    header.append(f"Y_{t}")
    if t < 2010:
        header += [f"L1_{t}", f"A_{t}", f"L2_{t}"]
header += [f"Y_pre_{k}" for k in range(1, 8)]

with open("cbi_synthetic.csv", "w", newline="") as f:
    w = csv.DictWriter(f, fieldnames=header)
    w.writeheader()
    w.writerows(rows)
