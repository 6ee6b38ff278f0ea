"""Writes a synthetic stand-in shaped like the grouped telecom field data.

1838 units observed for 18 months; only the monthly count of returns
(sales lag + lifetime + report delay) is recorded, plus 100 monthly-grouped
sales-lag and 100 report-delay samples from a related product.
"""
import math
import random
from collections import Counter

N, T0, SEED = 1838, 18, 20120618
rng = random.Random(SEED)


def lag():
    return rng.gammavariate(2.264, 1.714)


def delay():
    return rng.gammavariate(2.779, 0.5)


def life():
    return rng.weibullvariate(720.7, 1.153)


months = Counter()
for _ in range(N):
    s = lag() + life() + delay()
    if s < T0:
        months[math.floor(s)] += 1
returned = sum(months.values())

lag_months = Counter(math.floor(lag()) for _ in range(100))
delay_months = Counter(math.floor(delay()) for _ in range(100))

with open("samples/data/telecom_like.csv", "w") as out:
    out.write("kind,x,t,a,b,censor_c,target,count\n")
    for m in sorted(months):
        out.write(f"sum_claim,,,{m},{m + 1},,,{months[m]}\n")
    out.write(f"sum_unreturned,,,,,{T0},,{N - returned}\n")
    for m in sorted(lag_months):
        out.write(f"aux,,,{m},{m + 1},,sales_lag,{lag_months[m]}\n")
    for m in sorted(delay_months):
        out.write(f"aux,,,{m},{m + 1},,report_delay,{delay_months[m]}\n")
print(f"N={N} returned={returned}")
