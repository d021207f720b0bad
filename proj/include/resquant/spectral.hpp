#ifndef RESQUANT_SPECTRAL_HPP
#define RESQUANT_SPECTRAL_HPP

#include "resquant/network.hpp"
#include "resquant/tensor.hpp"

namespace resquant {

/// Largest singular value of a 2-D matrix by power iteration on W^T W.
/// The start vector is derived deterministically from the matrix shape, so
/// repeated calls return bit-identical results. Throws ConvergenceError
/// (carrying the last iterate) if the estimate has not stabilised to the
/// relative tolerance within max_iter sweeps.
double spectral_norm(const Tensor& w, double tol = 1e-10, int max_iter = 1000);

/// Weight tensor of a dense/conv layer flattened to [out, rest]:
/// conv kernels [out,in,k,k] become [out, in*k*k].
Tensor as_matrix(const Tensor& weights);

/// Spectral norm of a weighted layer's flattened kernel.
double layer_spectral_norm(const Layer& layer, double tol = 1e-10, int max_iter = 1000);

} // namespace resquant

#endif
