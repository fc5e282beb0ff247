#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace nailgrasp {

// PCA over column-vector samples. Uses the Gram ("snapshot") route when
// samples < dimensions, the covariance route otherwise. Components are
// orthonormal columns sorted by non-increasing variance; numerically zero
// eigenvalues (< 1e-12 * max) are dropped entirely.
struct PcaResult {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;  // dim x r, orthonormal columns
    Eigen::VectorXd variances;   // r, non-increasing, positive
    int k99 = 0;                 // smallest count covering >= 99% of total variance
};

inline PcaResult pca_columns(const Eigen::MatrixXd& data) {
    const Eigen::Index dim = data.rows();
    const Eigen::Index n = data.cols();
    if (n < 1 || dim < 1) throw std::invalid_argument("pca: empty data");
    PcaResult out;
    out.mean = data.rowwise().mean();
    if (n == 1) {
        out.components.resize(dim, 0);
        out.variances.resize(0);
        return out;
    }
    const Eigen::MatrixXd centered = data.colwise() - out.mean;
    Eigen::VectorXd evals;
    Eigen::MatrixXd comps;
    if (n <= dim) {
        // Gram matrix route: eigenvectors recovered by back-projection.
        const Eigen::MatrixXd gram = (centered.transpose() * centered) / double(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        if (es.info() != Eigen::Success) throw std::runtime_error("pca: eigensolver failed");
        evals = es.eigenvalues().reverse();
        const Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
        comps.resize(dim, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd v = centered * u.col(i);
            const double nrm = v.norm();
            comps.col(i) = nrm > 0 ? Eigen::VectorXd(v / nrm) : v;
        }
    } else {
        const Eigen::MatrixXd cov = (centered * centered.transpose()) / double(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        if (es.info() != Eigen::Success) throw std::runtime_error("pca: eigensolver failed");
        evals = es.eigenvalues().reverse();
        comps = es.eigenvectors().rowwise().reverse();
    }
    const double lmax = evals.size() ? std::max(evals(0), 0.0) : 0.0;
    const double floor = lmax * 1e-12;
    Eigen::Index r = 0;
    while (r < evals.size() && evals(r) > floor && evals(r) > 0.0) ++r;
    out.components = comps.leftCols(r);
    out.variances = evals.head(r);
    const double total = out.variances.sum();
    if (total > 0.0) {
        double cum = 0.0;
        for (Eigen::Index i = 0; i < r; ++i) {
            cum += out.variances(i);
            if (cum >= 0.99 * total) {
                out.k99 = static_cast<int>(i + 1);
                break;
            }
        }
        if (out.k99 == 0) out.k99 = static_cast<int>(r);
    }
    return out;
}

}  // namespace nailgrasp
