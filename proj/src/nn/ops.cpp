#include "aerogen/nn/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <stdexcept>

namespace aerogen::nn {

namespace {

void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// elementwise helper: y = f(a), dy -> da via dfn(value_a, value_y) factor
template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF df) {
    Tensor out(a->value.shape);
    const int64_t n = a->value.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = f(a->value[i]);
    return make_op(std::move(out), {a}, [df](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        const int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) {
            g[i] += self.grad[i] * df(p->value[i], self.value[i]);
        }
    });
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(trans_a ? m : k), b,
                static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
}

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            const int64_t n = self.value.numel();
            for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) { return add_scaled(a, b, -1.0); }

Var add_scaled(const Var& a, const Var& b, double alpha) {
    check(a->value.same_shape(b->value), "add_scaled: shape mismatch");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + alpha * b->value[i];
    return make_op(std::move(out), {a, b}, [alpha](Node& self) {
        const int64_t n = self.value.numel();
        if (self.parents[0]->requires_grad) {
            auto& g = self.parents[0]->ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& g = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] += alpha * self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const int64_t n = self.value.numel();
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    return unary_op(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double c) {
    return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var rsub_scalar(double c, const Var& a) {
    return unary_op(a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}

Var silu(const Var& a) {
    return unary_op(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var sigmoid(const Var& a) {
    return unary_op(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var log_clamped(const Var& a, double eps) {
    return unary_op(
        a, [eps](double x) { return std::log(x < eps ? eps : x); },
        [eps](double x, double) { return x < eps ? 0.0 : 1.0 / x; });
}

Var pow_const(const Var& a, double p) {
    return unary_op(
        a, [p](double x) { return std::pow(x, p); },
        [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Var abs(const Var& a) {
    return unary_op(
        a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var add_const(const Var& a, const Tensor& c) {
    check(a->value.same_shape(c), "add_const: shape mismatch");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + c[i];
    return make_op(std::move(out), {a}, [](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        const int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
    });
}

Var mul_const(const Var& a, const Tensor& c) {
    check(a->value.same_shape(c), "mul_const: shape mismatch");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * c[i];
    Tensor cc = c;
    return make_op(std::move(out), {a}, [cc](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        const int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * cc[i];
    });
}

// ---- linear algebra --------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    check(a->value.rank() == 2 && b->value.rank() == 2, "matmul: rank != 2");
    const int64_t m = a->value.shape[0], k = a->value.shape[1], n = b->value.shape[1];
    check(b->value.shape[0] == k, "matmul: inner dim mismatch");
    Tensor out({m, n});
    gemm(false, false, m, n, k, 1.0, a->value.ptr(), b->value.ptr(), 0.0, out.ptr());
    return make_op(std::move(out), {a, b}, [m, n, k](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            // dA = dC * B^T
            gemm(false, true, m, k, n, 1.0, self.grad.ptr(), pb->value.ptr(), 1.0,
                 pa->ensure_grad().ptr());
        }
        if (pb->requires_grad) {
            // dB = A^T * dC
            gemm(true, false, k, n, m, 1.0, pa->value.ptr(), self.grad.ptr(), 1.0,
                 pb->ensure_grad().ptr());
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    check(a->value.rank() == 2 && b->value.rank() == 2, "matmul_nt: rank != 2");
    const int64_t m = a->value.shape[0], k = a->value.shape[1], n = b->value.shape[0];
    check(b->value.shape[1] == k, "matmul_nt: inner dim mismatch");
    Tensor out({m, n});
    gemm(false, true, m, n, k, 1.0, a->value.ptr(), b->value.ptr(), 0.0, out.ptr());
    return make_op(std::move(out), {a, b}, [m, n, k](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            // dA = dC * B
            gemm(false, false, m, k, n, 1.0, self.grad.ptr(), pb->value.ptr(), 1.0,
                 pa->ensure_grad().ptr());
        }
        if (pb->requires_grad) {
            // dB = dC^T * A
            gemm(true, false, n, k, m, 1.0, self.grad.ptr(), pa->value.ptr(), 1.0,
                 pb->ensure_grad().ptr());
        }
    });
}

Var transpose(const Var& a) {
    check(a->value.rank() == 2, "transpose: rank != 2");
    const int64_t r = a->value.shape[0], c = a->value.shape[1];
    Tensor out({c, r});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
    return make_op(std::move(out), {a}, [r, c](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) g.at(i, j) += self.grad.at(j, i);
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    check(x->value.rank() == 2 && w->value.rank() == 2, "linear: rank != 2");
    const int64_t r = x->value.shape[0], in = x->value.shape[1], out_dim = w->value.shape[0];
    check(w->value.shape[1] == in, "linear: weight dim mismatch");
    Tensor out({r, out_dim});
    gemm(false, true, r, out_dim, in, 1.0, x->value.ptr(), w->value.ptr(), 0.0, out.ptr());
    if (b) {
        check(b->value.numel() == out_dim, "linear: bias dim mismatch");
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < out_dim; ++j) out.at(i, j) += b->value[j];
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents), [r, in, out_dim](Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        if (px->requires_grad) {
            gemm(false, false, r, in, out_dim, 1.0, self.grad.ptr(), pw->value.ptr(), 1.0,
                 px->ensure_grad().ptr());
        }
        if (pw->requires_grad) {
            gemm(true, false, out_dim, in, r, 1.0, self.grad.ptr(), px->value.ptr(), 1.0,
                 pw->ensure_grad().ptr());
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& gb = self.parents[2]->ensure_grad();
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < out_dim; ++j) gb[j] += self.grad.at(i, j);
        }
    });
}

// ---- shape -----------------------------------------------------------------

Var reshape(const Var& a, std::vector<int64_t> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        const int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i];
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    check(!xs.empty(), "concat_channels: empty");
    const int64_t n = xs[0]->value.shape[0], h = xs[0]->value.shape[2], w = xs[0]->value.shape[3];
    int64_t c_total = 0;
    for (const auto& x : xs) {
        check(x->value.rank() == 4 && x->value.shape[0] == n && x->value.shape[2] == h &&
                  x->value.shape[3] == w,
              "concat_channels: shape mismatch");
        c_total += x->value.shape[1];
    }
    Tensor out({n, c_total, h, w});
    const int64_t hw = h * w;
    int64_t c_off = 0;
    for (const auto& x : xs) {
        const int64_t c = x->value.shape[1];
        for (int64_t b = 0; b < n; ++b) {
            std::copy_n(x->value.ptr() + b * c * hw, c * hw,
                        out.ptr() + (b * c_total + c_off) * hw);
        }
        c_off += c;
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make_op(std::move(out), std::move(parents), [n, hw, c_total](Node& self) {
        int64_t c_off = 0;
        for (auto& p : self.parents) {
            const int64_t c = p->value.shape[1];
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (int64_t b = 0; b < n; ++b) {
                    const double* src = self.grad.ptr() + (b * c_total + c_off) * hw;
                    double* dst = g.ptr() + b * c * hw;
                    for (int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                }
            }
            c_off += c;
        }
    });
}

Var select_batch(const Var& x, int64_t n) {
    check(x->value.rank() == 4, "select_batch: rank != 4");
    const int64_t c = x->value.shape[1], h = x->value.shape[2], w = x->value.shape[3];
    const int64_t sz = c * h * w;
    Tensor out({c, h, w});
    std::copy_n(x->value.ptr() + n * sz, sz, out.ptr());
    return make_op(std::move(out), {x}, [n, sz](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        double* dst = g.ptr() + n * sz;
        for (int64_t i = 0; i < sz; ++i) dst[i] += self.grad[i];
    });
}

Var stack_batch(const std::vector<Var>& xs) {
    check(!xs.empty(), "stack_batch: empty");
    const auto& s = xs[0]->value.shape;
    check(s.size() == 3, "stack_batch: rank != 3");
    const int64_t sz = xs[0]->value.numel();
    Tensor out({static_cast<int64_t>(xs.size()), s[0], s[1], s[2]});
    for (size_t i = 0; i < xs.size(); ++i) {
        check(xs[i]->value.same_shape(xs[0]->value), "stack_batch: shape mismatch");
        std::copy_n(xs[i]->value.ptr(), sz, out.ptr() + static_cast<int64_t>(i) * sz);
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make_op(std::move(out), std::move(parents), [sz](Node& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            auto& p = self.parents[i];
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            const double* src = self.grad.ptr() + static_cast<int64_t>(i) * sz;
            for (int64_t j = 0; j < sz; ++j) g[j] += src[j];
        }
    });
}

namespace {
// index maps for space_to_depth; out[n][(c*b*b)+dy*b+dx][i][j] = in[n][c][i*b+dy][j*b+dx]
void s2d_loop(const Tensor& in, Tensor& out, int block, bool forward) {
    const int64_t n = in.shape[0];
    const int64_t c = forward ? in.shape[1] : out.shape[1];
    const int64_t oh = forward ? out.shape[2] : in.shape[2];
    const int64_t ow = forward ? out.shape[3] : in.shape[3];
    Tensor& big = forward ? const_cast<Tensor&>(in) : out;
    (void)big;
    for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t dy = 0; dy < block; ++dy)
                for (int64_t dx = 0; dx < block; ++dx)
                    for (int64_t i = 0; i < oh; ++i)
                        for (int64_t j = 0; j < ow; ++j) {
                            int64_t oc = (ch * block + dy) * block + dx;
                            int64_t iy = i * block + dy, ix = j * block + dx;
                            if (forward) {
                                out.at(b, oc, i, j) = in.at(b, ch, iy, ix);
                            } else {
                                out.at(b, ch, iy, ix) = in.at(b, oc, i, j);
                            }
                        }
}
}  // namespace

Var space_to_depth(const Var& x, int block) {
    check(x->value.rank() == 4, "space_to_depth: rank != 4");
    const auto& s = x->value.shape;
    check(s[2] % block == 0 && s[3] % block == 0, "space_to_depth: not divisible");
    Tensor out({s[0], s[1] * block * block, s[2] / block, s[3] / block});
    s2d_loop(x->value, out, block, true);
    return make_op(std::move(out), {x}, [block](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor dx = Tensor::zeros(p->value.shape);
        s2d_loop(self.grad, dx, block, false);
        auto& g = p->ensure_grad();
        const int64_t n = dx.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += dx[i];
    });
}

Var depth_to_space(const Var& x, int block) {
    check(x->value.rank() == 4, "depth_to_space: rank != 4");
    const auto& s = x->value.shape;
    check(s[1] % (block * block) == 0, "depth_to_space: channels not divisible");
    Tensor out({s[0], s[1] / (block * block), s[2] * block, s[3] * block});
    s2d_loop(x->value, out, block, false);
    return make_op(std::move(out), {x}, [block](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        Tensor dx = Tensor::zeros(p->value.shape);
        s2d_loop(self.grad, dx, block, true);
        auto& g = p->ensure_grad();
        const int64_t n = dx.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += dx[i];
    });
}

Var upsample_nearest2(const Var& x) {
    check(x->value.rank() == 4, "upsample_nearest2: rank != 4");
    const auto& s = x->value.shape;
    Tensor out({s[0], s[1], s[2] * 2, s[3] * 2});
    for (int64_t b = 0; b < s[0]; ++b)
        for (int64_t c = 0; c < s[1]; ++c)
            for (int64_t i = 0; i < s[2] * 2; ++i)
                for (int64_t j = 0; j < s[3] * 2; ++j)
                    out.at(b, c, i, j) = x->value.at(b, c, i / 2, j / 2);
    return make_op(std::move(out), {x}, [s](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        for (int64_t b = 0; b < s[0]; ++b)
            for (int64_t c = 0; c < s[1]; ++c)
                for (int64_t i = 0; i < s[2] * 2; ++i)
                    for (int64_t j = 0; j < s[3] * 2; ++j)
                        g.at(b, c, i / 2, j / 2) += self.grad.at(b, c, i, j);
    });
}

// ---- conv ------------------------------------------------------------------

namespace {

struct ConvDims {
    int64_t c, h, w, co, kh, kw, oh, ow;
    int stride, pad;
};

void im2col(const double* x, const ConvDims& d, double* cols) {
    // cols: (C*kh*kw, OH*OW)
    const int64_t patch = d.oh * d.ow;
    for (int64_t c = 0; c < d.c; ++c) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                double* row = cols + ((c * d.kh + ky) * d.kw + kx) * patch;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride + ky - d.pad;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride + kx - d.pad;
                        row[oy * d.ow + ox] =
                            (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                ? x[(c * d.h + iy) * d.w + ix]
                                : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_acc(const double* cols, const ConvDims& d, double* dx) {
    const int64_t patch = d.oh * d.ow;
    for (int64_t c = 0; c < d.c; ++c) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const double* row = cols + ((c * d.kh + ky) * d.kw + kx) * patch;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.h) continue;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride + kx - d.pad;
                        if (ix < 0 || ix >= d.w) continue;
                        dx[(c * d.h + iy) * d.w + ix] += row[oy * d.ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check(x->value.rank() == 4 && w->value.rank() == 4, "conv2d: rank != 4");
    ConvDims d;
    const int64_t n = x->value.shape[0];
    d.c = x->value.shape[1];
    d.h = x->value.shape[2];
    d.w = x->value.shape[3];
    d.co = w->value.shape[0];
    d.kh = w->value.shape[2];
    d.kw = w->value.shape[3];
    d.stride = stride;
    d.pad = pad;
    check(w->value.shape[1] == d.c, "conv2d: channel mismatch");
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    check(d.oh > 0 && d.ow > 0, "conv2d: empty output");
    const int64_t ckk = d.c * d.kh * d.kw;
    const int64_t patch = d.oh * d.ow;

    Tensor out({n, d.co, d.oh, d.ow});
    std::vector<double> cols(static_cast<size_t>(ckk * patch));
    for (int64_t s = 0; s < n; ++s) {
        im2col(x->value.ptr() + s * d.c * d.h * d.w, d, cols.data());
        gemm(false, false, d.co, patch, ckk, 1.0, w->value.ptr(), cols.data(), 0.0,
             out.ptr() + s * d.co * patch);
    }
    if (b) {
        check(b->value.numel() == d.co, "conv2d: bias mismatch");
        for (int64_t s = 0; s < n; ++s)
            for (int64_t c = 0; c < d.co; ++c) {
                double* dst = out.ptr() + (s * d.co + c) * patch;
                const double bv = b->value[c];
                for (int64_t i = 0; i < patch; ++i) dst[i] += bv;
            }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents), [d, n, ckk, patch](Node& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        std::vector<double> cols(static_cast<size_t>(ckk * patch));
        for (int64_t s = 0; s < n; ++s) {
            const double* dy = self.grad.ptr() + s * d.co * patch;
            if (pw->requires_grad) {
                im2col(px->value.ptr() + s * d.c * d.h * d.w, d, cols.data());
                // dW += dY (Co,P) x cols^T (P,CKK)
                gemm(false, true, d.co, ckk, patch, 1.0, dy, cols.data(), 1.0,
                     pw->ensure_grad().ptr());
            }
            if (px->requires_grad) {
                // dcols = W^T (CKK,Co) x dY (Co,P)
                gemm(true, false, ckk, patch, d.co, 1.0, pw->value.ptr(), dy, 0.0, cols.data());
                col2im_acc(cols.data(), d, px->ensure_grad().ptr() + s * d.c * d.h * d.w);
            }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& gb = self.parents[2]->ensure_grad();
            for (int64_t s = 0; s < n; ++s)
                for (int64_t c = 0; c < d.co; ++c) {
                    const double* dy = self.grad.ptr() + (s * d.co + c) * patch;
                    double acc = 0.0;
                    for (int64_t i = 0; i < patch; ++i) acc += dy[i];
                    gb[c] += acc;
                }
        }
    });
}

// ---- norm ------------------------------------------------------------------

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    check(x->value.rank() == 4, "group_norm: rank != 4");
    const int64_t n = x->value.shape[0], c = x->value.shape[1], h = x->value.shape[2],
                  w = x->value.shape[3];
    check(c % groups == 0, "group_norm: channels not divisible by groups");
    check(gamma->value.numel() == c && beta->value.numel() == c, "group_norm: affine mismatch");
    const int64_t cg = c / groups;       // channels per group
    const int64_t m = cg * h * w;        // elements per group
    Tensor out({n, c, h, w});
    Tensor mean({n, static_cast<int64_t>(groups)});
    Tensor invstd({n, static_cast<int64_t>(groups)});
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t g = 0; g < groups; ++g) {
            const double* src = x->value.ptr() + (b * c + g * cg) * h * w;
            double mu = 0.0;
            for (int64_t i = 0; i < m; ++i) mu += src[i];
            mu /= static_cast<double>(m);
            double var = 0.0;
            for (int64_t i = 0; i < m; ++i) {
                const double dvi = src[i] - mu;
                var += dvi * dvi;
            }
            var /= static_cast<double>(m);
            const double is = 1.0 / std::sqrt(var + eps);
            mean.at(b, g) = mu;
            invstd.at(b, g) = is;
            double* dst = out.ptr() + (b * c + g * cg) * h * w;
            for (int64_t cc = 0; cc < cg; ++cc) {
                const double ga = gamma->value[g * cg + cc];
                const double be = beta->value[g * cg + cc];
                for (int64_t i = 0; i < h * w; ++i) {
                    const double xh = (src[cc * h * w + i] - mu) * is;
                    dst[cc * h * w + i] = ga * xh + be;
                }
            }
        }
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [n, c, h, w, groups, cg, m, mean, invstd](Node& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const int64_t hw = h * w;
        for (int64_t b = 0; b < n; ++b) {
            for (int64_t g = 0; g < groups; ++g) {
                const double mu = mean.at(b, g);
                const double is = invstd.at(b, g);
                const double* xv = px->value.ptr() + (b * c + g * cg) * hw;
                const double* dy = self.grad.ptr() + (b * c + g * cg) * hw;
                // accumulate means over the group for the normalization terms
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int64_t cc = 0; cc < cg; ++cc) {
                    const double ga = pg->value[g * cg + cc];
                    for (int64_t i = 0; i < hw; ++i) {
                        const double xh = (xv[cc * hw + i] - mu) * is;
                        const double dxh = dy[cc * hw + i] * ga;
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh;
                    }
                }
                const double mean_dxh = sum_dxh / static_cast<double>(m);
                const double mean_dxh_xh = sum_dxh_xh / static_cast<double>(m);
                if (px->requires_grad) {
                    auto& gx = px->ensure_grad();
                    double* dst = gx.ptr() + (b * c + g * cg) * hw;
                    for (int64_t cc = 0; cc < cg; ++cc) {
                        const double ga = pg->value[g * cg + cc];
                        for (int64_t i = 0; i < hw; ++i) {
                            const double xh = (xv[cc * hw + i] - mu) * is;
                            const double dxh = dy[cc * hw + i] * ga;
                            dst[cc * hw + i] += is * (dxh - mean_dxh - xh * mean_dxh_xh);
                        }
                    }
                }
                if (pg->requires_grad || pb->requires_grad) {
                    for (int64_t cc = 0; cc < cg; ++cc) {
                        double dga = 0.0, dbe = 0.0;
                        for (int64_t i = 0; i < hw; ++i) {
                            const double xh = (xv[cc * hw + i] - mu) * is;
                            dga += dy[cc * hw + i] * xh;
                            dbe += dy[cc * hw + i];
                        }
                        if (pg->requires_grad) pg->ensure_grad()[g * cg + cc] += dga;
                        if (pb->requires_grad) pb->ensure_grad()[g * cg + cc] += dbe;
                    }
                }
            }
        }
    });
}

// ---- softmax / broadcast ---------------------------------------------------

Var softmax_rows(const Var& a) {
    check(a->value.rank() == 2, "softmax_rows: rank != 2");
    const int64_t r = a->value.shape[0], c = a->value.shape[1];
    Tensor out({r, c});
    for (int64_t i = 0; i < r; ++i) {
        double mx = a->value.at(i, 0);
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, a->value.at(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double e = std::exp(a->value.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < c; ++j) out.at(i, j) /= sum;
    }
    return make_op(std::move(out), {a}, [r, c](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        for (int64_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < c; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
            for (int64_t j = 0; j < c; ++j)
                g.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
        }
    });
}

Var scale_rows(const Var& a, const Tensor& row_scales) {
    check(a->value.rank() == 2, "scale_rows: rank != 2");
    const int64_t r = a->value.shape[0], c = a->value.shape[1];
    check(row_scales.numel() == r, "scale_rows: scale count mismatch");
    Tensor out({r, c});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(i, j) = a->value.at(i, j) * row_scales[i];
    Tensor s = row_scales;
    return make_op(std::move(out), {a}, [r, c, s](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) g.at(i, j) += self.grad.at(i, j) * s[i];
    });
}

Var add_bias_nchw(const Var& x, const Var& b) {
    check(x->value.rank() == 4, "add_bias_nchw: rank != 4");
    const int64_t n = x->value.shape[0], c = x->value.shape[1],
                  hw = x->value.shape[2] * x->value.shape[3];
    check(b->value.numel() == c, "add_bias_nchw: bias mismatch");
    Tensor out = x->value;
    for (int64_t s = 0; s < n; ++s)
        for (int64_t ch = 0; ch < c; ++ch) {
            double* dst = out.ptr() + (s * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] += b->value[ch];
        }
    return make_op(std::move(out), {x, b}, [n, c, hw](Node& self) {
        if (self.parents[0]->requires_grad) {
            auto& g = self.parents[0]->ensure_grad();
            const int64_t total = self.value.numel();
            for (int64_t i = 0; i < total; ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& gb = self.parents[1]->ensure_grad();
            for (int64_t s = 0; s < n; ++s)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double* src = self.grad.ptr() + (s * c + ch) * hw;
                    double acc = 0.0;
                    for (int64_t i = 0; i < hw; ++i) acc += src[i];
                    gb[ch] += acc;
                }
        }
    });
}

Var add_rows_nchw(const Var& x, const Var& t) {
    check(x->value.rank() == 4 && t->value.rank() == 2, "add_rows_nchw: rank mismatch");
    const int64_t n = x->value.shape[0], c = x->value.shape[1],
                  hw = x->value.shape[2] * x->value.shape[3];
    check(t->value.shape[0] == n && t->value.shape[1] == c, "add_rows_nchw: dim mismatch");
    Tensor out = x->value;
    for (int64_t s = 0; s < n; ++s)
        for (int64_t ch = 0; ch < c; ++ch) {
            double* dst = out.ptr() + (s * c + ch) * hw;
            const double tv = t->value.at(s, ch);
            for (int64_t i = 0; i < hw; ++i) dst[i] += tv;
        }
    return make_op(std::move(out), {x, t}, [n, c, hw](Node& self) {
        if (self.parents[0]->requires_grad) {
            auto& g = self.parents[0]->ensure_grad();
            const int64_t total = self.value.numel();
            for (int64_t i = 0; i < total; ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& gt = self.parents[1]->ensure_grad();
            for (int64_t s = 0; s < n; ++s)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double* src = self.grad.ptr() + (s * c + ch) * hw;
                    double acc = 0.0;
                    for (int64_t i = 0; i < hw; ++i) acc += src[i];
                    gt.at(s, ch) += acc;
                }
        }
    });
}

// ---- reductions --------------------------------------------------------------

Var sum_all(const Var& a) {
    Tensor out({1});
    double acc = 0.0;
    const int64_t n = a->value.numel();
    for (int64_t i = 0; i < n; ++i) acc += a->value[i];
    out[0] = acc;
    return make_op(std::move(out), {a}, [](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[0];
    });
}

Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    return scale(sum_all(a), inv);
}

Var mse_loss(const Var& pred, const Tensor& target) {
    check(pred->value.same_shape(target), "mse_loss: shape mismatch");
    const int64_t n = pred->value.numel();
    Tensor out({1});
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double dlt = pred->value[i] - target[i];
        acc += dlt * dlt;
    }
    out[0] = acc / static_cast<double>(n);
    Tensor tgt = target;
    return make_op(std::move(out), {pred}, [tgt, n](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        const double s = 2.0 * self.grad[0] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) g[i] += s * (p->value[i] - tgt[i]);
    });
}

Var weighted_sum(const Var& a, const Tensor& weights) {
    check(a->value.same_shape(weights), "weighted_sum: shape mismatch");
    const int64_t n = a->value.numel();
    Tensor out({1});
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a->value[i] * weights[i];
    out[0] = acc;
    Tensor ws = weights;
    return make_op(std::move(out), {a}, [ws, n](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[0] * ws[i];
    });
}

}  // namespace aerogen::nn
