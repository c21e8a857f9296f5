"""Compiled per-pixel compositing loops (forward and reverse replay).

Gaussians are visited in global front-to-back order and splatted into their
screen rectangles. Because every pixel sees the Gaussians covering it in
that same global order, this is equivalent to a per-pixel depth sort.
"""
import numpy as np
from numba import njit

ALPHA_MIN = 1.0 / 255.0
ALPHA_MAX = 0.99
T_MIN = 1e-4


@njit(cache=True)
def _grow(arr, new_size):
    out = np.empty(new_size, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True)
def rasterize_forward(mean2d, conic, opacity, color, rect, order, height, width, record):
    """Composite projected Gaussians; optionally record every contribution.

    Returns the image, final transmittance and, when ``record`` is set, four
    parallel arrays (pixel, gaussian, alpha, transmittance-before) in the
    order contributions were made, plus their count.
    """
    img = np.zeros((height, width, 3))
    T = np.ones((height, width))
    done = np.zeros((height, width), dtype=np.bool_)
    cap = 1024
    if record:
        cap = max(1024, 8 * height * width)
    ent_pix = np.empty(cap, dtype=np.int64)
    ent_g = np.empty(cap, dtype=np.int64)
    ent_a = np.empty(cap)
    ent_T = np.empty(cap)
    n = 0
    for r in range(order.shape[0]):
        g = order[r]
        mx = mean2d[g, 0]
        my = mean2d[g, 1]
        ca = conic[g, 0]
        cb = conic[g, 1]
        cc = conic[g, 2]
        op = opacity[g]
        for py in range(rect[g, 2], rect[g, 3] + 1):
            dy = py - my
            for px in range(rect[g, 0], rect[g, 1] + 1):
                if done[py, px]:
                    continue
                dx = px - mx
                power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                alpha = op * np.exp(power)
                if alpha > ALPHA_MAX:
                    alpha = ALPHA_MAX
                if alpha < ALPHA_MIN:
                    continue
                tb = T[py, px]
                w = alpha * tb
                img[py, px, 0] += color[g, 0] * w
                img[py, px, 1] += color[g, 1] * w
                img[py, px, 2] += color[g, 2] * w
                if record:
                    if n == cap:
                        cap *= 2
                        ent_pix = _grow(ent_pix, cap)
                        ent_g = _grow(ent_g, cap)
                        ent_a = _grow(ent_a, cap)
                        ent_T = _grow(ent_T, cap)
                    ent_pix[n] = py * width + px
                    ent_g[n] = g
                    ent_a[n] = alpha
                    ent_T[n] = tb
                    n += 1
                tn = tb * (1.0 - alpha)
                T[py, px] = tn
                if tn < T_MIN:
                    done[py, px] = True
    return img, T, ent_pix[:n], ent_g[:n], ent_a[:n], ent_T[:n]


@njit(cache=True)
def rasterize_backward(ent_pix, ent_g, ent_a, ent_T, mean2d, conic, opacity, color, dl_dpix, width):
    """Reverse replay of recorded contributions.

    ``dl_dpix`` is ``(H*W, 3)``. Returns per-Gaussian gradients w.r.t. the
    2D mean, the conic ``(a, b, c)`` of ``-0.5 (a dx^2 + 2 b dx dy + c dy^2)``,
    the activated opacity and the RGB color.
    """
    P = mean2d.shape[0]
    g_mean = np.zeros((P, 2))
    g_conic = np.zeros((P, 3))
    g_opac = np.zeros(P)
    g_color = np.zeros((P, 3))
    behind = np.zeros((dl_dpix.shape[0], 3))
    for e in range(ent_pix.shape[0] - 1, -1, -1):
        pix = ent_pix[e]
        g = ent_g[e]
        a = ent_a[e]
        tb = ent_T[e]
        w = a * tb
        d_alpha = 0.0
        for ch in range(3):
            G = dl_dpix[pix, ch]
            g_color[g, ch] += w * G
            d_alpha += (color[g, ch] - behind[pix, ch]) * G
            behind[pix, ch] = a * color[g, ch] + (1.0 - a) * behind[pix, ch]
        d_alpha *= tb
        px = pix % width
        py = pix // width
        dx = px - mean2d[g, 0]
        dy = py - mean2d[g, 1]
        ca = conic[g, 0]
        cb = conic[g, 1]
        cc = conic[g, 2]
        gauss = np.exp(-0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy)
        if opacity[g] * gauss > ALPHA_MAX:
            continue
        g_opac[g] += d_alpha * gauss
        d_power = d_alpha * a
        g_mean[g, 0] += d_power * (ca * dx + cb * dy)
        g_mean[g, 1] += d_power * (cb * dx + cc * dy)
        g_conic[g, 0] += -0.5 * dx * dx * d_power
        g_conic[g, 1] += -dx * dy * d_power
        g_conic[g, 2] += -0.5 * dy * dy * d_power
    return g_mean, g_conic, g_opac, g_color
