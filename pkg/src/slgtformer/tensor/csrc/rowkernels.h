/* Row kernels over contiguous float64 rows; wrapped by _ckernels.pyx. */
#ifndef SLGT_ROWKERNELS_H
#define SLGT_ROWKERNELS_H

#include <math.h>
#include <stddef.h>

#define SLGT_GELU_C 0.7978845608028654
#define SLGT_GELU_A 0.044715

static void slgt_softmax_rows(const double *restrict x, double *restrict y, ptrdiff_t n, ptrdiff_t m)
{
    for (ptrdiff_t i = 0; i < n; i++) {
        const double *restrict xr = x + i * m;
        double *restrict yr = y + i * m;
        double mx = xr[0], s = 0.0;
        for (ptrdiff_t j = 1; j < m; j++)
            mx = xr[j] > mx ? xr[j] : mx;
        for (ptrdiff_t j = 0; j < m; j++)
            yr[j] = exp(xr[j] - mx);
        for (ptrdiff_t j = 0; j < m; j++)
            s += yr[j];
        const double inv = 1.0 / s;
        for (ptrdiff_t j = 0; j < m; j++)
            yr[j] *= inv;
    }
}

static void slgt_softmax_rows_backward(const double *restrict y, const double *restrict gy,
                                       double *restrict gx, ptrdiff_t n, ptrdiff_t m)
{
    for (ptrdiff_t i = 0; i < n; i++) {
        const double *restrict yr = y + i * m;
        const double *restrict gr = gy + i * m;
        double *restrict outr = gx + i * m;
        double dot = 0.0;
        for (ptrdiff_t j = 0; j < m; j++)
            dot += gr[j] * yr[j];
        for (ptrdiff_t j = 0; j < m; j++)
            outr[j] = yr[j] * (gr[j] - dot);
    }
}

static void slgt_layer_norm_rows(const double *restrict x, const double *restrict gain,
                                 const double *restrict bias, double eps, double *restrict y,
                                 double *restrict xhat, double *restrict rstd, ptrdiff_t n, ptrdiff_t m)
{
    for (ptrdiff_t i = 0; i < n; i++) {
        const double *restrict xr = x + i * m;
        double *restrict yr = y + i * m;
        double *restrict hr = xhat + i * m;
        double mean = 0.0, var = 0.0;
        for (ptrdiff_t j = 0; j < m; j++)
            mean += xr[j];
        mean /= (double)m;
        for (ptrdiff_t j = 0; j < m; j++) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= (double)m;
        const double r = 1.0 / sqrt(var + eps);
        rstd[i] = r;
        for (ptrdiff_t j = 0; j < m; j++) {
            hr[j] = (xr[j] - mean) * r;
            yr[j] = hr[j] * gain[j] + bias[j];
        }
    }
}

/* ggain and gbias must be zero-initialised by the caller. */
static void slgt_layer_norm_rows_backward(const double *restrict gy, const double *restrict xhat,
                                          const double *restrict rstd, const double *restrict gain,
                                          double *restrict gx, double *restrict ggain,
                                          double *restrict gbias, ptrdiff_t n, ptrdiff_t m)
{
    for (ptrdiff_t i = 0; i < n; i++) {
        const double *restrict gr = gy + i * m;
        const double *restrict hr = xhat + i * m;
        double *restrict outr = gx + i * m;
        double m1 = 0.0, m2 = 0.0;
        for (ptrdiff_t j = 0; j < m; j++) {
            const double g = gr[j] * gain[j];
            m1 += g;
            m2 += g * hr[j];
        }
        for (ptrdiff_t j = 0; j < m; j++) {
            ggain[j] += gr[j] * hr[j];
            gbias[j] += gr[j];
        }
        m1 /= (double)m;
        m2 /= (double)m;
        const double r = rstd[i];
        for (ptrdiff_t j = 0; j < m; j++)
            outr[j] = (gr[j] * gain[j] - m1 - hr[j] * m2) * r;
    }
}

/* tanh-GELU written as x * sigmoid(2u) with u = c (x + a x^3); the argument is
 * clamped so exp never overflows (sigmoid is saturated well before |2u| = 60). */
static inline double slgt_sig2u(double v)
{
    double t = -2.0 * SLGT_GELU_C * (v + SLGT_GELU_A * v * v * v);
    t = t > 60.0 ? 60.0 : (t < -60.0 ? -60.0 : t);
    return 1.0 / (1.0 + exp(t));
}

static void slgt_gelu(const double *restrict x, double *restrict y, ptrdiff_t total)
{
    for (ptrdiff_t j = 0; j < total; j++)
        y[j] = x[j] * slgt_sig2u(x[j]);
}

static void slgt_gelu_backward(const double *restrict x, const double *restrict gy,
                               double *restrict gx, ptrdiff_t total)
{
    for (ptrdiff_t j = 0; j < total; j++) {
        const double v = x[j];
        const double s = slgt_sig2u(v);
        const double du = SLGT_GELU_C * (1.0 + 3.0 * SLGT_GELU_A * v * v);
        gx[j] = gy[j] * (s + 2.0 * v * s * (1.0 - s) * du);
    }
}

#endif
