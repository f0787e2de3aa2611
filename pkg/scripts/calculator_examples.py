"""Print the bound calculator on three reference regimes."""

import math

from sim2real_lab.theory import theory_diagnostics

CASES = {
    "no simulator gap, exact regression": dict(d=4, H=10, A=2, eps_sim=0.0, lambda_bar=0.25, gamma=math.inf),
    "combination lock, gap 1/(8192 H)": dict(d=4, H=12, A=2, eps_sim=1 / (8192 * 12), lambda_bar=0.25),
    "large gap, escape probability above 1": dict(d=4, H=10, A=2, eps_sim=0.01, lambda_bar=1 / 8, gamma=32),
}

if __name__ == "__main__":
    for title, kwargs in CASES.items():
        print(f"== {title}: {kwargs}")
        print("\n".join(theory_diagnostics(**kwargs).lines()))
        print()
