#pragma once

// Building blocks of the segmentation network, exposed for layer-level
// gradient checks. Row-major matrices, one row per point or per edge.

#include <cstdint>
#include <vector>

#include "boltpipe/segnet.hpp"

namespace boltpipe::segnet::layers {

// Y = X W + b
void linear_forward(const Mat& X, const Mat& W, const Mat& b, Mat& Y);
// Accumulates into dW, db; writes dX when non-null.
void linear_backward(const Mat& X, const Mat& W, const Mat& dY, Mat& dW, Mat& db, Mat* dX);

// Edge rows e_{i,t} = concat(f_i, f_j - f_i) W + b with j = g.at(i, t), built
// without materializing the concatenation.
void edge_linear_forward(const Mat& F, const KnnGraph& g, const Mat& W, const Mat& b, Mat& Z);
void edge_linear_backward(const Mat& F, const KnnGraph& g, const Mat& W, const Mat& dZ, Mat& dW, Mat& db,
                          Mat* dF);

struct BnCache {
    Mat xhat;
    RowVec mean, var, inv_std;
};
// Normalizes each column over rows with biased variance.
void batchnorm_train(const Mat& Z, const Mat& gamma, const Mat& beta, double eps, Mat& Y, BnCache& cache);
void batchnorm_eval(const Mat& Z, const Mat& gamma, const Mat& beta, const Mat& running_mean,
                    const Mat& running_var, double eps, Mat& Y);
// dY in, dZ out; accumulates dgamma, dbeta.
void batchnorm_backward(const BnCache& cache, const Mat& gamma, const Mat& dY, Mat& dZ, Mat& dgamma,
                        Mat& dbeta);

void leaky_relu_forward(Mat& Y, double slope);
// Scales dY in place using the forward output Y (its sign equals the input's).
void leaky_relu_backward(const Mat& Y, double slope, Mat& dY);

using IndexMat = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// out(i, c) = max over t of E(i*k + t, c); arg holds the winning t, ties to
// the lowest neighbor id.
void neighbor_max_forward(const Mat& E, const KnnGraph& g, Mat& out, IndexMat& arg);
void neighbor_max_backward(const IndexMat& arg, std::size_t k, const Mat& dOut, Mat& dE);

// g(c) = max over rows; ties to the lowest row.
void global_max_forward(const Mat& A, Mat& g, std::vector<std::int32_t>& arg);
void global_max_backward(const std::vector<std::int32_t>& arg, const Mat& dg, Mat& dA);

} // namespace boltpipe::segnet::layers
