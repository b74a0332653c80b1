"""Regenerate tests/limit_table.py from symbolic antiderivatives (needs sympy).

Each curve is integrated symbolically from its defining integral, with
phi_star taken from the nested form int_0^t mu_alpha(v) e^{-2av} dv so that
the table does not share the integral swap used by the library.

    python tests/oracles/derive_limit_table.py > tests/limit_table.py
"""
import sympy as sp

u, v, t = sp.symbols("u v t", positive=True)
TIMES = ("1/4", "1/2", "3/4", "1")


def closed_forms(a: int, alpha: int, beta: int) -> dict:
    a = sp.Integer(a)
    mu = sp.integrate(u**alpha * sp.exp(a * (t - u)), (u, 0, t))
    if a == 0:
        nu_over = sp.integrate(u**alpha * (t - u), (u, 0, t))
    else:
        nu_over = sp.integrate(u**alpha * sp.exp(a * (t - u)) * (sp.exp(a * (t - u)) - 1) / a, (u, 0, t))
    lam = sp.integrate(u**beta * sp.exp(2 * a * (t - u)), (u, 0, t))
    norm = nu_over.subs(t, 1)
    phi_star = sp.integrate(mu.subs(t, v) * sp.exp(-2 * a * v), (v, 0, t)) / norm
    return {
        "mu_alpha": mu,
        "nu_alpha": sp.expand(-a * nu_over),
        "nu_over_a": nu_over,
        "lambda_beta": lam,
        "phi": nu_over / norm,
        "phi_star": phi_star,
        "pi_alpha": mu / mu.subs(t, 1),
    }


def main():
    print('"""Frozen closed-form values of the limit curves; regenerate with')
    print('tests/oracles/derive_limit_table.py."""')
    print()
    print(f"TIMES = ({', '.join(str(float(sp.Rational(x))) for x in TIMES)})")
    print()
    print("# (a, alpha, beta) -> curve -> values at TIMES")
    print("TABLE = {")
    for a in (-1, 0, 1):
        for alpha in (0, 1, 2):
            for beta in sorted({alpha, 2 * alpha}):
                forms = closed_forms(a, alpha, beta)
                print(f"    ({a}, {alpha}, {beta}): {{")
                for name, expr in forms.items():
                    vals = [repr(float(sp.N(expr.subs(t, sp.Rational(x)), 30))) for x in TIMES]
                    print(f"        {name!r}: ({', '.join(vals)}),")
                print("    },")
    print("}")


if __name__ == "__main__":
    main()
