#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include "gmmcluster/common.hpp"
#include "gmmcluster/linalg.hpp"

namespace gmmcluster {

/// Gaussian mixture model with validated parameters.
struct MixtureModel {
    int k = 0;
    int d = 0;
    std::vector<double> weights;
    std::vector<VectorXd> means;
    std::vector<MatrixXd> covariances;
    bool shared_covariance = false;
    bool centered = false;

    MixtureModel() = default;

    MixtureModel(std::vector<double> w, std::vector<VectorXd> mu, std::vector<MatrixXd> sigma,
                 bool shared = false, bool centered_ = false)
        : k(static_cast<int>(w.size())),
          weights(std::move(w)),
          means(std::move(mu)),
          covariances(std::move(sigma)),
          shared_covariance(shared),
          centered(centered_) {
        if (k == 0 || means.size() != static_cast<size_t>(k) ||
            covariances.size() != static_cast<size_t>(k))
            throw std::invalid_argument("MixtureModel: k, means and covariances must agree");
        d = static_cast<int>(means[0].size());
        double wsum = 0.0;
        for (double wi : weights) {
            if (wi < 0.0) throw std::invalid_argument("MixtureModel: negative weight");
            wsum += wi;
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw std::invalid_argument("MixtureModel: weights must sum to 1");
        for (int i = 0; i < k; ++i) {
            if (means[i].size() != d || covariances[i].rows() != d || covariances[i].cols() != d)
                throw std::invalid_argument("MixtureModel: dimension mismatch");
            if (sym_deviation(covariances[i]) > 1e-12)
                throw std::invalid_argument("MixtureModel: covariance not symmetric");
            if (sym_eig(covariances[i]).values.minCoeff() <= 0.0)
                throw std::invalid_argument("MixtureModel: covariance not positive definite");
            if (centered && means[i].norm() > 1e-12)
                throw std::invalid_argument("MixtureModel: centered model with nonzero mean");
            if (shared_covariance && (covariances[i] - covariances[0]).cwiseAbs().maxCoeff() != 0.0)
                throw std::invalid_argument(
                    "MixtureModel: shared_covariance requires identical covariances");
        }
    }
};

/// A sample set with ground-truth labels and a corruption mask.
/// labels[i] == -1 exactly when corrupted[i] is true.
struct Dataset {
    MatrixXd points;                  // n x d, one sample per row
    Eigen::VectorXi labels;           // component index, or -1 for corrupted rows
    std::vector<std::uint8_t> corrupted;
    std::uint64_t seed = 0;           // provenance
    std::string generator;            // provenance

    int n() const { return static_cast<int>(points.rows()); }
    int d() const { return static_cast<int>(points.cols()); }

    void validate() const {
        if (labels.size() != points.rows() || corrupted.size() != static_cast<size_t>(points.rows()))
            throw std::invalid_argument("Dataset: size mismatch");
        for (int i = 0; i < n(); ++i)
            if ((labels[i] == -1) != (corrupted[i] != 0))
                throw std::invalid_argument("Dataset: corruption mask and labels disagree");
    }
};

/// Pairwise separation measures between two mixture components.
struct SeparationReport {
    double mean_delta = 0.0;       // sqrt of max_v <mu_i - mu_j, v>^2 / v'(S_i + S_j)v
    double spectral_delta = 0.0;   // sqrt of extreme relative variance ratio
    double frobenius_delta = 0.0;  // sqrt of ||A - I||_F^2 / ||A||^2, maximized over orderings
    VectorXd witness_direction;    // direction achieving the dominant measure
};

/// Affine recoordinatization y = linear * (x - shift); linear is rank x d.
struct AffineTransform {
    VectorXd shift;
    MatrixXd linear;
    int rank = 0;

    VectorXd apply(const VectorXd& x) const { return linear * (x - shift); }
};

/// Draw n samples from the mixture.  Component choices and Gaussian draws
/// come from a single seeded stream, so results are reproducible bit for bit.
inline Dataset sample_mixture(const MixtureModel& model, int n, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("sample_mixture: negative n");
    Dataset data;
    data.points.resize(n, model.d);
    data.labels.resize(n);
    data.corrupted.assign(n, 0);
    data.seed = seed;
    data.generator = "sample_mixture";
    Rng rng(seed);

    std::vector<MatrixXd> chol(model.k);
    for (int i = 0; i < model.k; ++i)
        chol[i] = Eigen::LLT<MatrixXd>(model.covariances[i]).matrixL();

    std::vector<double> cum(model.k);
    std::partial_sum(model.weights.begin(), model.weights.end(), cum.begin());
    cum.back() = 1.0;

    VectorXd z(model.d);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        int c = 0;
        while (u >= cum[c] && c + 1 < model.k) ++c;
        for (int j = 0; j < model.d; ++j) z[j] = rng.normal();
        data.points.row(i) = (model.means[c] + chol[c] * z).transpose();
        data.labels[i] = c;
    }
    return data;
}

enum class CorruptionModel { point_mass, shifted_gaussian, far_sphere };

inline CorruptionModel corruption_model_from_string(const std::string& s) {
    if (s == "point_mass") return CorruptionModel::point_mass;
    if (s == "shifted_gaussian") return CorruptionModel::shifted_gaussian;
    if (s == "far_sphere") return CorruptionModel::far_sphere;
    throw std::invalid_argument("corrupt: unknown corruption model '" + s + "'");
}

/// Replace exactly floor(eps * n) uniformly chosen rows with adversarial
/// points.  Replaced rows get label -1 and the corruption mask; all other
/// rows are left bit-identical.
inline Dataset corrupt(const Dataset& data, double eps, CorruptionModel model,
                       std::uint64_t seed) {
    if (eps < 0.0 || eps >= 1.0) throw std::invalid_argument("corrupt: eps must be in [0, 1)");
    Dataset out = data;
    const int n = data.n(), d = data.d();
    const int m = static_cast<int>(std::floor(eps * n));
    if (m == 0) return out;

    Rng rng(seed);
    // Partial Fisher-Yates: first m entries of a uniformly shuffled index list.
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < m; ++i)
        std::swap(idx[i], idx[i + static_cast<int>(rng.uniform_index(n - i))]);
    std::sort(idx.begin(), idx.begin() + m);

    const double far_radius = 100.0 * std::sqrt(static_cast<double>(d));
    VectorXd shift = VectorXd::Constant(d, 5.0 / std::sqrt(static_cast<double>(d)));
    for (int t = 0; t < m; ++t) {
        const int i = idx[t];
        VectorXd x(d);
        switch (model) {
            case CorruptionModel::point_mass:
                x.setZero();
                break;
            case CorruptionModel::shifted_gaussian:
                for (int j = 0; j < d; ++j) x[j] = shift[j] + rng.normal();
                break;
            case CorruptionModel::far_sphere:
                x = far_radius * random_unit(d, rng);
                break;
        }
        out.points.row(i) = x.transpose();
        out.labels[i] = -1;
        out.corrupted[i] = 1;
    }
    out.generator = data.generator + "+corrupt";
    return out;
}

/// Pairwise separation of components i and j under the three measures used
/// by the clustering guarantees.  Rejects ill-conditioned covariances.
inline SeparationReport parameter_distance(const MixtureModel& model, int i, int j) {
    if (i < 0 || j < 0 || i >= model.k || j >= model.k)
        throw std::invalid_argument("parameter_distance: component index out of range");
    const MatrixXd &Si = model.covariances[i], &Sj = model.covariances[j];
    for (const MatrixXd* S : {&Si, &Sj}) {
        SymEig e = sym_eig(*S);
        if (e.values.minCoeff() <= 0.0)
            throw std::invalid_argument("parameter_distance: singular covariance");
        if (e.values.maxCoeff() / e.values.minCoeff() > 1e12)
            throw std::invalid_argument("parameter_distance: covariance condition number exceeds 1e12");
    }

    SeparationReport rep;
    const VectorXd dmu = model.means[i] - model.means[j];

    // mean_delta^2 = dmu' (Si + Sj)^{-1} dmu, witnessed by (Si+Sj)^{-1} dmu.
    Eigen::LLT<MatrixXd> llt(Si + Sj);
    const VectorXd w_mean = llt.solve(dmu);
    const double mean2 = dmu.dot(w_mean);
    rep.mean_delta = std::sqrt(std::max(0.0, mean2));

    // Relative spectral measure over both orderings.  The extreme variance
    // ratio is reduced by the trivial baseline 1, so identical covariances
    // score zero separation.
    double spec_lmax = 0.0;
    VectorXd w_spec = VectorXd::Zero(model.d);
    for (int order = 0; order < 2; ++order) {
        const MatrixXd& A = order == 0 ? Si : Sj;
        const MatrixXd& B = order == 0 ? Sj : Si;
        const MatrixXd Ainv_sqrt = spd_inv_sqrt(A);
        SymEig e = sym_eig(Ainv_sqrt * B * Ainv_sqrt);
        const double lmax = e.values.maxCoeff();
        if (lmax > spec_lmax) {
            spec_lmax = lmax;
            w_spec = Ainv_sqrt * e.vectors.col(model.d - 1);
        }
    }
    rep.spectral_delta = std::sqrt(std::max(0.0, spec_lmax - 1.0));

    // Relative Frobenius measure over both orderings.
    double frob2 = 0.0;
    for (int order = 0; order < 2; ++order) {
        const MatrixXd& A = order == 0 ? Si : Sj;
        const MatrixXd& B = order == 0 ? Sj : Si;
        const MatrixXd Ainv_sqrt = spd_inv_sqrt(A);
        const MatrixXd M = Ainv_sqrt * B * Ainv_sqrt;
        const double op = sym_eig(M).values.cwiseAbs().maxCoeff();
        frob2 = std::max(frob2, (M - MatrixXd::Identity(model.d, model.d)).squaredNorm() / (op * op));
    }
    rep.frobenius_delta = std::sqrt(frob2);

    // Witness for the dominant measure (unit length; zero for identical components).
    if (rep.mean_delta >= rep.spectral_delta) {
        rep.witness_direction =
            w_mean.norm() > 0 ? VectorXd(w_mean / w_mean.norm()) : VectorXd::Zero(model.d);
    } else {
        rep.witness_direction =
            w_spec.norm() > 0 ? VectorXd(w_spec / w_spec.norm()) : VectorXd::Zero(model.d);
    }
    return rep;
}

/// Iterative trimmed whitening.  Returns the affine transform and the
/// transformed dataset (labels, mask and row order preserved).  With trim > 0,
/// each round drops the trim-fraction of points with largest Mahalanobis
/// distance under the current estimates before re-estimating; the trimmed
/// covariance is rescaled by the Gaussian consistency factor so the estimator
/// is asymptotically unbiased on uncontaminated Gaussian data.
inline std::pair<AffineTransform, Dataset> isotropize(const Dataset& data, double trim,
                                                      int rounds = 5) {
    if (trim < 0.0 || trim >= 0.5) throw std::invalid_argument("isotropize: trim must be in [0, 0.5)");
    const int n = data.n(), d = data.d();
    const int keep = n - static_cast<int>(std::floor(trim * n));
    if (keep < d + 1)
        throw std::invalid_argument("isotropize: fewer than d + 1 points after trimming");

    std::vector<int> inliers(n);
    std::iota(inliers.begin(), inliers.end(), 0);
    VectorXd mean = VectorXd::Zero(d);
    MatrixXd cov = MatrixXd::Identity(d, d);

    for (int round = 0; round < rounds; ++round) {
        mean.setZero();
        for (int i : inliers) mean += data.points.row(i).transpose();
        mean /= static_cast<double>(inliers.size());
        cov.setZero();
        for (int i : inliers) {
            const VectorXd c = data.points.row(i).transpose() - mean;
            cov += c * c.transpose();
        }
        cov /= static_cast<double>(inliers.size());
        if (trim == 0.0) break;

        // Rank-aware Mahalanobis distances under the current estimate.
        SymEig e = sym_eig(cov);
        const double floor = std::max(e.values.maxCoeff(), 1e-300) * 1e-12;
        VectorXd inv = e.values;
        for (int t = 0; t < d; ++t) inv[t] = e.values[t] > floor ? 1.0 / e.values[t] : 0.0;
        std::vector<std::pair<double, int>> scored(n);
        for (int i = 0; i < n; ++i) {
            const VectorXd c = e.vectors.transpose() * (data.points.row(i).transpose() - mean);
            scored[i] = {c.cwiseAbs2().dot(inv), i};
        }
        std::stable_sort(scored.begin(), scored.end());
        inliers.clear();
        for (int i = 0; i < keep; ++i) inliers.push_back(scored[i].second);
        std::sort(inliers.begin(), inliers.end());
    }

    if (trim > 0.0) {
        // Trimming by Mahalanobis distance cuts the tail of the chi-square
        // radial law and shrinks the raw covariance; rescale so the estimator
        // stays consistent for Gaussian inliers.
        const double kf = static_cast<double>(keep) / n;
        const boost::math::chi_squared chi_d(d), chi_d2(d + 2);
        const double q = boost::math::quantile(chi_d, kf);
        cov *= kf / boost::math::cdf(chi_d2, q);
    }

    SymEig e = sym_eig(cov);
    const double floor = std::max(e.values.maxCoeff(), 1e-300) * 1e-10;
    std::vector<int> kept_dims;
    for (int t = 0; t < d; ++t)
        if (e.values[t] > floor) kept_dims.push_back(t);
    const int r = static_cast<int>(kept_dims.size());

    AffineTransform tf;
    tf.shift = mean;
    tf.rank = r;
    if (r == d) {
        // Full rank: symmetric inverse square root, so no gratuitous rotation.
        tf.linear = e.vectors * e.values.cwiseSqrt().cwiseInverse().asDiagonal() *
                    e.vectors.transpose();
    } else {
        tf.linear.resize(r, d);
        for (int t = 0; t < r; ++t)
            tf.linear.row(t) =
                e.vectors.col(kept_dims[t]).transpose() / std::sqrt(e.values[kept_dims[t]]);
    }

    Dataset out;
    out.points.resize(n, r);
    for (int i = 0; i < n; ++i)
        out.points.row(i) = tf.apply(data.points.row(i).transpose()).transpose();
    out.labels = data.labels;
    out.corrupted = data.corrupted;
    out.seed = data.seed;
    out.generator = data.generator + "+isotropize";
    return {tf, out};
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const MixtureModel& m) {
    nlohmann::json j;
    j["k"] = m.k;
    j["d"] = m.d;
    j["weights"] = m.weights;
    for (int i = 0; i < m.k; ++i) {
        j["means"].push_back(std::vector<double>(m.means[i].data(), m.means[i].data() + m.d));
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < m.d; ++r) {
            const VectorXd row = m.covariances[i].row(r).transpose();
            rows.push_back(std::vector<double>(row.data(), row.data() + m.d));
        }
        j["covariances"].push_back(rows);
    }
    j["shared_covariance"] = m.shared_covariance;
    j["centered"] = m.centered;
    return j;
}

inline MixtureModel model_from_json(const nlohmann::json& j) {
    const int k = j.at("k").get<int>();
    const int d = j.at("d").get<int>();
    std::vector<double> w = j.at("weights").get<std::vector<double>>();
    std::vector<VectorXd> means;
    std::vector<MatrixXd> covs;
    for (int i = 0; i < k; ++i) {
        auto mv = j.at("means").at(i).get<std::vector<double>>();
        means.push_back(Eigen::Map<VectorXd>(mv.data(), d));
        MatrixXd c(d, d);
        for (int r = 0; r < d; ++r) {
            auto row = j.at("covariances").at(i).at(r).get<std::vector<double>>();
            c.row(r) = Eigen::Map<VectorXd>(row.data(), d).transpose();
        }
        covs.push_back(c);
    }
    return MixtureModel(std::move(w), std::move(means), std::move(covs),
                        j.value("shared_covariance", false), j.value("centered", false));
}

/// Binary dataset format: "GMMD" magic, u32 n, u32 d, n*d row-major float64
/// points, n int32 labels, n uint8 corruption flags.
inline void save_dataset(const Dataset& data, const std::string& path) {
    data.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
    f.write("GMMD", 4);
    const std::uint32_t n = data.n(), d = data.d();
    f.write(reinterpret_cast<const char*>(&n), 4);
    f.write(reinterpret_cast<const char*>(&d), 4);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j) {
            const double x = data.points(i, j);
            f.write(reinterpret_cast<const char*>(&x), 8);
        }
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::int32_t l = data.labels[i];
        f.write(reinterpret_cast<const char*>(&l), 4);
    }
    f.write(reinterpret_cast<const char*>(data.corrupted.data()), n);
    if (!f) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "GMMD")
        throw std::runtime_error("load_dataset: bad magic in " + path);
    std::uint32_t n = 0, d = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    f.read(reinterpret_cast<char*>(&d), 4);
    Dataset data;
    data.points.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j) f.read(reinterpret_cast<char*>(&data.points(i, j)), 8);
    data.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::int32_t l;
        f.read(reinterpret_cast<char*>(&l), 4);
        data.labels[i] = l;
    }
    data.corrupted.resize(n);
    f.read(reinterpret_cast<char*>(data.corrupted.data()), n);
    if (!f) throw std::runtime_error("load_dataset: truncated file " + path);
    data.generator = "load:" + path;
    data.validate();
    return data;
}

inline void save_dataset_csv(const Dataset& data, const std::string& path) {
    data.validate();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_dataset_csv: cannot open " + path);
    for (int j = 0; j < data.d(); ++j) f << "x" << j << ",";
    f << "label,corrupted\n";
    char buf[32];
    for (int i = 0; i < data.n(); ++i) {
        for (int j = 0; j < data.d(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", data.points(i, j));
            f << buf << ",";
        }
        f << data.labels[i] << "," << int(data.corrupted[i]) << "\n";
    }
    if (!f) throw std::runtime_error("save_dataset_csv: write failed for " + path);
}

}  // namespace gmmcluster
