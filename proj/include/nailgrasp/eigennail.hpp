#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "core.hpp"
#include "image.hpp"
#include "pca.hpp"
#include "synth.hpp"

namespace nailgrasp {

struct NailSpaceCoord {
    Eigen::VectorXd w;
};

struct EigenNailModel {
    int height = 0;
    int width = 0;
    Eigen::VectorXd mean;          // pixel vector, length h*w
    Eigen::MatrixXd eigen_images;  // (h*w) x k, orthonormal columns
    Eigen::VectorXd eigenvalues;   // k, non-increasing
    Eigen::MatrixXd coeffs;        // 3 x k (rows: fx, fy, fz)
    Eigen::Vector3d offsets;
    Eigen::Vector3d force_min{0, 0, 0};
    Eigen::Vector3d force_max{0, 0, 0};

    int k() const { return static_cast<int>(eigen_images.cols()); }

    Image mean_image() const {
        Image img(height, width, 1);
        Eigen::VectorXd::Map(img.pixels.data(), mean.size()) = mean;
        return img;
    }
    Image eigen_image(int i) const {
        Image img(height, width, 1);
        Eigen::VectorXd::Map(img.pixels.data(), mean.size()) = eigen_images.col(i);
        return img;
    }
};

namespace detail {
inline Eigen::Map<const Eigen::VectorXd> as_vec(const Image& img) {
    return {img.pixels.data(), static_cast<Eigen::Index>(img.pixels.size())};
}
}  // namespace detail

struct PcaFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;   // (h*w) x k
    Eigen::VectorXd eigenvalues;  // k
    int k = 0;
    int height = 0, width = 0;
};

// PCA of mean-centered gray images; the retained count is the smallest one
// covering >= 99% of total variance (zero total variance gives k = 0).
inline PcaFit pca_fit(const std::vector<Image>& images) {
    if (images.size() < 2) throw std::invalid_argument("pca_fit: need >= 2 images");
    const int h = images[0].height, w = images[0].width;
    for (const Image& img : images)
        if (img.height != h || img.width != w || img.channels != 1)
            throw std::invalid_argument("pca_fit: image dimensions differ");
    Eigen::MatrixXd data(static_cast<Eigen::Index>(h) * w, images.size());
    for (std::size_t i = 0; i < images.size(); ++i) data.col(i) = detail::as_vec(images[i]);
    const PcaResult p = pca_columns(data);
    PcaFit out;
    out.mean = p.mean;
    out.k = p.k99;
    out.components = p.components.leftCols(out.k);
    out.eigenvalues = p.variances.head(out.k);
    out.height = h;
    out.width = w;
    return out;
}

inline NailSpaceCoord project(const EigenNailModel& m, const Image& img) {
    if (img.height != m.height || img.width != m.width || img.channels != 1)
        throw std::invalid_argument("project: image dimensions differ from model");
    return {m.eigen_images.transpose() * (detail::as_vec(img) - m.mean)};
}

// Per-axis ordinary least squares with intercept, via a rank-revealing
// orthogonal factorization (minimum-norm solve only when rank-deficient).
inline std::pair<Eigen::MatrixXd, Eigen::Vector3d> fit_regression(
    const std::vector<NailSpaceCoord>& coords, const std::vector<ForceVector>& forces) {
    if (coords.size() != forces.size())
        throw std::invalid_argument("fit_regression: list lengths differ");
    const Eigen::Index n = static_cast<Eigen::Index>(coords.size());
    if (n == 0) throw std::invalid_argument("fit_regression: empty data");
    const Eigen::Index k = coords[0].w.size();
    if (n <= k) throw UnderdeterminedError("fit_regression: " + std::to_string(n) +
                                           " samples for " + std::to_string(k) + " coordinates");
    Eigen::MatrixXd X(n, k + 1);
    Eigen::MatrixXd Y(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (coords[i].w.size() != k) throw std::invalid_argument("fit_regression: ragged coords");
        X.row(i).head(k) = coords[i].w;
        X(i, k) = 1.0;
        Y.row(i) << forces[i].fx, forces[i].fy, forces[i].fz;
    }
    Eigen::MatrixXd beta;  // (k+1) x 3
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() == k + 1) {
        beta = qr.solve(Y);
    } else {
        beta = X.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(Y);
    }
    Eigen::MatrixXd coeffs = beta.topRows(k).transpose();  // 3 x k
    Eigen::Vector3d offsets = beta.row(k).transpose();
    return {coeffs, offsets};
}

struct PredictResult {
    ForceVector f;
    bool extrapolated = false;
};

inline PredictResult predict(const EigenNailModel& m, const Image& img) {
    const NailSpaceCoord w = project(m, img);
    const Eigen::Vector3d fv = m.coeffs * w.w + m.offsets;
    PredictResult out;
    out.f = {fv(0), fv(1), fv(2)};
    for (int a = 0; a < 3; ++a) {
        const double tol = 0.1 * (m.force_max(a) - m.force_min(a));
        if (fv(a) < m.force_min(a) - tol || fv(a) > m.force_max(a) + tol) out.extrapolated = true;
    }
    return out;
}

inline EigenNailModel train_eigennail(const std::vector<Image>& images,
                                      const std::vector<ForceVector>& forces) {
    if (images.size() != forces.size())
        throw std::invalid_argument("train_eigennail: list lengths differ");
    const PcaFit fit = pca_fit(images);
    EigenNailModel m;
    m.height = fit.height;
    m.width = fit.width;
    m.mean = fit.mean;
    m.eigen_images = fit.components;
    m.eigenvalues = fit.eigenvalues;
    std::vector<NailSpaceCoord> coords(images.size());
    for (std::size_t i = 0; i < images.size(); ++i)
        coords[i].w = m.eigen_images.transpose() * (detail::as_vec(images[i]) - m.mean);
    auto [coeffs, offsets] = fit_regression(coords, forces);
    m.coeffs = coeffs;
    m.offsets = offsets;
    m.force_min = {forces[0].fx, forces[0].fy, forces[0].fz};
    m.force_max = m.force_min;
    for (const ForceVector& f : forces) {
        m.force_min = m.force_min.cwiseMin(Eigen::Vector3d{f.fx, f.fy, f.fz});
        m.force_max = m.force_max.cwiseMax(Eigen::Vector3d{f.fx, f.fy, f.fz});
    }
    return m;
}

// --------------------------------------------------------------------------
// Persistence: JSON with images packed as little-endian float32 base64.

namespace detail {
inline std::string vec_b64(const Eigen::VectorXd& v) {
    return base64_f32(std::vector<double>(v.data(), v.data() + v.size()));
}
inline Eigen::VectorXd b64_vec(const std::string& s, Eigen::Index expect) {
    const std::vector<double> xs = base64_f32_decode(s);
    if (static_cast<Eigen::Index>(xs.size()) != expect)
        throw FormatError("image payload has wrong length");
    return Eigen::VectorXd::Map(xs.data(), xs.size());
}
}  // namespace detail

inline void save_eigennail(const EigenNailModel& m, const std::string& path) {
    nlohmann::json j;
    j["schema"] = "eigennail-model/1";
    j["height"] = m.height;
    j["width"] = m.width;
    j["k"] = m.k();
    j["mean"] = detail::vec_b64(m.mean);
    auto eig = nlohmann::json::array();
    for (int i = 0; i < m.k(); ++i) eig.push_back(detail::vec_b64(m.eigen_images.col(i)));
    j["eigen_images"] = eig;
    j["eigenvalues"] = std::vector<double>(m.eigenvalues.data(), m.eigenvalues.data() + m.k());
    auto coeffs = nlohmann::json::array();
    for (int a = 0; a < 3; ++a) {
        std::vector<double> row(m.k());
        for (int i = 0; i < m.k(); ++i) row[i] = m.coeffs(a, i);
        coeffs.push_back(row);
    }
    j["coeffs"] = coeffs;
    j["offsets"] = {m.offsets(0), m.offsets(1), m.offsets(2)};
    j["force_min"] = {m.force_min(0), m.force_min(1), m.force_min(2)};
    j["force_max"] = {m.force_max(0), m.force_max(1), m.force_max(2)};
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

inline EigenNailModel load_eigennail(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad model file " + path + ": " + e.what());
    }
    if (j.value("schema", "") != "eigennail-model/1")
        throw FormatError("unexpected schema in " + path);
    EigenNailModel m;
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    const Eigen::Index npx = static_cast<Eigen::Index>(m.height) * m.width;
    const int k = j.at("k").get<int>();
    m.mean = detail::b64_vec(j.at("mean").get<std::string>(), npx);
    m.eigen_images.resize(npx, k);
    for (int i = 0; i < k; ++i)
        m.eigen_images.col(i) = detail::b64_vec(j.at("eigen_images").at(i).get<std::string>(), npx);
    const auto evs = j.at("eigenvalues").get<std::vector<double>>();
    if (static_cast<int>(evs.size()) != k) throw FormatError("eigenvalue count mismatch");
    m.eigenvalues = Eigen::VectorXd::Map(evs.data(), k);
    m.coeffs.resize(3, k);
    for (int a = 0; a < 3; ++a) {
        const auto row = j.at("coeffs").at(a).get<std::vector<double>>();
        if (static_cast<int>(row.size()) != k) throw FormatError("coeff row length mismatch");
        m.coeffs.row(a) = Eigen::VectorXd::Map(row.data(), k).transpose();
    }
    for (int a = 0; a < 3; ++a) {
        m.offsets(a) = j.at("offsets").at(a).get<double>();
        m.force_min(a) = j.at("force_min").at(a).get<double>();
        m.force_max(a) = j.at("force_max").at(a).get<double>();
    }
    return m;
}

}  // namespace nailgrasp
