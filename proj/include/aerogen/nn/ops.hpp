#pragma once

#include <vector>

#include "aerogen/nn/autograd.hpp"

namespace aerogen::nn {

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a + alpha * b; keeps the alpha-term exactly affine (no intermediate rounding
// differences between alpha values)
Var add_scaled(const Var& a, const Var& b, double alpha);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double c);
Var rsub_scalar(double c, const Var& a);  // c - a
Var silu(const Var& a);
Var sigmoid(const Var& a);
Var log_clamped(const Var& a, double eps = 1e-9);
Var pow_const(const Var& a, double p);
Var abs(const Var& a);
Var add_const(const Var& a, const Tensor& c);
Var mul_const(const Var& a, const Tensor& c);

// ---- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);     // (M,K) x (K,N)
Var matmul_nt(const Var& a, const Var& b);  // (M,K) x (N,K)^T
Var transpose(const Var& a);                // 2-D
// rows (R,in) x W(out,in)^T + b(out); b may be null
Var linear(const Var& x, const Var& w, const Var& b);

// ---- shape -----------------------------------------------------------------
Var reshape(const Var& a, std::vector<int64_t> shape);
Var concat_channels(const std::vector<Var>& xs);        // NCHW along C
Var select_batch(const Var& x, int64_t n);              // NCHW -> CHW
Var stack_batch(const std::vector<Var>& xs);            // CHW... -> NCHW
Var space_to_depth(const Var& x, int block);            // NCHW -> N(C*b*b)(H/b)(W/b)
Var depth_to_space(const Var& x, int block);
Var upsample_nearest2(const Var& x);

// ---- conv / norm -----------------------------------------------------------
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

// ---- softmax / broadcast ---------------------------------------------------
Var softmax_rows(const Var& a);                         // (R,C) along C
Var scale_rows(const Var& a, const Tensor& row_scales); // (R,C) * s[r]
Var add_bias_nchw(const Var& x, const Var& b);          // b:(C)
Var add_rows_nchw(const Var& x, const Var& t);          // t:(N,C) broadcast HW

// ---- reductions ------------------------------------------------------------
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mse_loss(const Var& pred, const Tensor& target);
Var weighted_sum(const Var& a, const Tensor& weights);  // sum(a*w), scalar

// raw row-major gemm helper (double, OpenBLAS)
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c);

}  // namespace aerogen::nn
