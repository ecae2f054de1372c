"""Independent high-precision scalar recurrences for the optimizer update rules."""
import mpmath as mp

mp.mp.dps = 50

MU, EPS, B1, B2, RHO = (mp.mpf(v) for v in ("0.9", "1e-8", "0.9", "0.999", "0.95"))


def run(kind, w, grads, lr):
    w, lr = mp.mpf(w), mp.mpf(lr)
    v = G = m = Eg = Ex = mp.mpf(0)
    out = []
    for t, g in enumerate(grads, start=1):
        g = mp.mpf(g)
        if kind == "sgd":
            w -= lr * g
        elif kind == "momentum":
            v = MU * v + g
            w -= lr * v
        elif kind == "adagrad":
            G += g * g
            w -= lr * g / (mp.sqrt(G) + EPS)
        elif kind == "adadelta":
            Eg = RHO * Eg + (1 - RHO) * g * g
            dx = -mp.sqrt(Ex + EPS) / mp.sqrt(Eg + EPS) * g
            Ex = RHO * Ex + (1 - RHO) * dx * dx
            w += dx
        elif kind == "adam":
            m = B1 * m + (1 - B1) * g
            v = B2 * v + (1 - B2) * g * g
            mhat = m / (1 - B1 ** t)
            vhat = v / (1 - B2 ** t)
            w -= lr * mhat / (mp.sqrt(vhat) + EPS)
        out.append(float(w))
    return out
