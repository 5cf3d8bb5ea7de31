#include "boltpipe/segnet_layers.hpp"

#include <cmath>

namespace boltpipe::segnet::layers {

namespace {

// Column sums of a row-major matrix, accumulated row by row.
RowVec column_sums(const Mat& A) {
    RowVec s = RowVec::Zero(A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) s += A.row(r);
    return s;
}

} // namespace

void linear_forward(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
    Y.noalias() = X * W;
    Y.rowwise() += b.row(0);
}

void linear_backward(const Mat& X, const Mat& W, const Mat& dY, Mat& dW, Mat& db, Mat* dX) {
    dW.noalias() += X.transpose() * dY;
    db += column_sums(dY);
    if (dX) dX->noalias() = dY * W.transpose();
}

void edge_linear_forward(const Mat& F, const KnnGraph& g, const Mat& W, const Mat& b, Mat& Z) {
    const Eigen::Index d = F.cols();
    const Mat U = W.topRows(d) - W.bottomRows(d);
    const Mat P = F * U;
    const Mat Q = F * W.bottomRows(d);
    Z.resize(static_cast<Eigen::Index>(g.n * g.k), W.cols());
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t t = 0; t < g.k; ++t) {
            Z.row(static_cast<Eigen::Index>(i * g.k + t)) = P.row(ii) + Q.row(g.at(i, t)) + b.row(0);
        }
    }
}

void edge_linear_backward(const Mat& F, const KnnGraph& g, const Mat& W, const Mat& dZ, Mat& dW, Mat& db,
                          Mat* dF) {
    const Eigen::Index d = F.cols();
    Mat dP = Mat::Zero(F.rows(), W.cols());
    Mat dQ = Mat::Zero(F.rows(), W.cols());
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t t = 0; t < g.k; ++t) {
            const auto row = dZ.row(static_cast<Eigen::Index>(i * g.k + t));
            dP.row(ii) += row;
            dQ.row(g.at(i, t)) += row;
        }
    }
    db += column_sums(dP);
    const Mat dU = F.transpose() * dP;
    const Mat dV = F.transpose() * dQ;
    dW.topRows(d) += dU;
    dW.bottomRows(d) += dV - dU;
    if (dF) {
        const Mat U = W.topRows(d) - W.bottomRows(d);
        dF->noalias() = dP * U.transpose();
        dF->noalias() += dQ * W.bottomRows(d).transpose();
    }
}

void batchnorm_train(const Mat& Z, const Mat& gamma, const Mat& beta, double eps, Mat& Y, BnCache& c) {
    const double n = static_cast<double>(Z.rows());
    c.mean = column_sums(Z) / n;
    c.xhat.resize(Z.rows(), Z.cols());
    RowVec sq = RowVec::Zero(Z.cols());
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
        c.xhat.row(r) = Z.row(r) - c.mean;
        sq.array() += c.xhat.row(r).array().square();
    }
    c.var = sq / n;
    c.inv_std = (c.var.array() + eps).rsqrt().matrix();
    Y.resize(Z.rows(), Z.cols());
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
        c.xhat.row(r).array() *= c.inv_std.array();
        Y.row(r) = (c.xhat.row(r).array() * gamma.row(0).array()).matrix() + beta.row(0);
    }
}

void batchnorm_eval(const Mat& Z, const Mat& gamma, const Mat& beta, const Mat& running_mean,
                    const Mat& running_var, double eps, Mat& Y) {
    const RowVec scale = (gamma.row(0).array() * (running_var.row(0).array() + eps).rsqrt()).matrix();
    const RowVec shift = beta.row(0) - (running_mean.row(0).array() * scale.array()).matrix();
    Y.resize(Z.rows(), Z.cols());
    for (Eigen::Index r = 0; r < Z.rows(); ++r) Y.row(r) = (Z.row(r).array() * scale.array()).matrix() + shift;
}

void batchnorm_backward(const BnCache& c, const Mat& gamma, const Mat& dY, Mat& dZ, Mat& dgamma,
                        Mat& dbeta) {
    const double n = static_cast<double>(dY.rows());
    RowVec sum_dy = RowVec::Zero(dY.cols());
    RowVec sum_dy_xhat = RowVec::Zero(dY.cols());
    for (Eigen::Index r = 0; r < dY.rows(); ++r) {
        sum_dy += dY.row(r);
        sum_dy_xhat.array() += dY.row(r).array() * c.xhat.row(r).array();
    }
    dbeta += sum_dy;
    dgamma += sum_dy_xhat;
    const RowVec mean_dy = sum_dy / n;
    const RowVec mean_dy_xhat = sum_dy_xhat / n;
    const RowVec scale = (gamma.row(0).array() * c.inv_std.array()).matrix();
    dZ.resize(dY.rows(), dY.cols());
    for (Eigen::Index r = 0; r < dY.rows(); ++r) {
        dZ.row(r) = ((dY.row(r) - mean_dy).array() - c.xhat.row(r).array() * mean_dy_xhat.array()) * scale.array();
    }
}

void leaky_relu_forward(Mat& Y, double slope) {
    Y = Y.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

void leaky_relu_backward(const Mat& Y, double slope, Mat& dY) {
    dY = dY.binaryExpr(Y, [slope](double d, double y) { return y > 0.0 ? d : slope * d; });
}

void neighbor_max_forward(const Mat& E, const KnnGraph& g, Mat& out, IndexMat& arg) {
    const Eigen::Index w = E.cols();
    out.resize(static_cast<Eigen::Index>(g.n), w);
    arg.resize(static_cast<Eigen::Index>(g.n), w);
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto base = static_cast<Eigen::Index>(i * g.k);
        for (Eigen::Index c = 0; c < w; ++c) {
            double best = E(base, c);
            std::size_t best_t = 0;
            for (std::size_t t = 1; t < g.k; ++t) {
                const double v = E(base + static_cast<Eigen::Index>(t), c);
                if (v > best || (v == best && g.at(i, t) < g.at(i, best_t))) {
                    best = v;
                    best_t = t;
                }
            }
            out(ii, c) = best;
            arg(ii, c) = static_cast<std::int32_t>(best_t);
        }
    }
}

void neighbor_max_backward(const IndexMat& arg, std::size_t k, const Mat& dOut, Mat& dE) {
    dE = Mat::Zero(dOut.rows() * static_cast<Eigen::Index>(k), dOut.cols());
    for (Eigen::Index i = 0; i < dOut.rows(); ++i) {
        for (Eigen::Index c = 0; c < dOut.cols(); ++c) {
            dE(i * static_cast<Eigen::Index>(k) + arg(i, c), c) = dOut(i, c);
        }
    }
}

void global_max_forward(const Mat& A, Mat& g, std::vector<std::int32_t>& arg) {
    g.resize(1, A.cols());
    arg.assign(static_cast<std::size_t>(A.cols()), 0);
    for (Eigen::Index c = 0; c < A.cols(); ++c) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < A.rows(); ++r) {
            if (A(r, c) > A(best, c)) best = r;
        }
        g(0, c) = A(best, c);
        arg[static_cast<std::size_t>(c)] = static_cast<std::int32_t>(best);
    }
}

void global_max_backward(const std::vector<std::int32_t>& arg, const Mat& dg, Mat& dA) {
    for (Eigen::Index c = 0; c < dg.cols(); ++c) dA(arg[static_cast<std::size_t>(c)], c) += dg(0, c);
}

} // namespace boltpipe::segnet::layers
