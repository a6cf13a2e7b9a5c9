// Batch least-squares observability of the initial biases and level angles
// from zero-velocity intervals.
//
// Between two stance epochs the velocity change is zero, which to first
// order in the biases gives three linear constraints
//
//   alpha = chi * b_a + gamma * b_g + eta * x_theta
//
// on X = [b_a; b_g; x_theta], where x_theta is the initial up direction in the
// body frame. Rows of a batch share one attitude chain, computed from raw
// gyro increments and anchored at the first increment of the batch. Earth
// rotation is ignored.
#pragma once

#include <stridenav/so3.hpp>
#include <stridenav/strapdown.hpp>

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace stridenav {

using Matrix39 = Eigen::Matrix<double, 3, 9>;
using Vector9 = Eigen::Matrix<double, 9, 1>;

struct ConstraintRow {
    Vector3 alpha = Vector3::Zero();
    Matrix3 chi = Matrix3::Zero();
    Matrix3 gamma = Matrix3::Zero();
    Matrix3 eta = Matrix3::Zero(); ///< -g * (t_end - t_start) * I
    int M = 0;                     ///< update intervals in the row
    double t_start = 0.0;
    double t_end = 0.0;

    Matrix39 k() const {
        Matrix39 m;
        m << chi, gamma, eta;
        return m;
    }
};

/// Sequential row builder. The attitude chain and the gyro-bias sensitivity
/// sum run across rows; close_row() only starts a new set of sums.
class ConstraintAccumulator {
  public:
    explicit ConstraintAccumulator(double g, double t0 = 0.0) : g_(g), t_(t0) {
        if (!(g > 0.0)) throw UsageError("ConstraintAccumulator: gravity must be positive");
        open_row();
    }

    /// Append one update interval of raw (bias-uncorrected) increments.
    void add(const ImuIncrements &in) {
        if (!(in.T > 0.0)) throw UsageError("ConstraintAccumulator: increment with T <= 0");
        const double T = in.T;
        const TwoSampleDelta d = two_sample_delta(in);
        const Vector3 cdv = chain_ * d.dv;
        row_.alpha -= cdv;
        row_.chi -= T * chain_ * (Matrix3::Identity() + so3::skew((5.0 * in.dtheta1 + in.dtheta2) / 6.0));
        row_.gamma += so3::skew(cdv) * bias_sum_ + chain_ * so3::skew(T / 6.0 * (in.dv1 + 5.0 * in.dv2));
        row_.M += 1;
        t_ += T;

        chain_ = chain_ * so3::exp_map(d.dtheta);
        bias_sum_ += T * chain_ * so3::right_jacobian(d.dtheta);
    }

    bool empty() const { return row_.M == 0; }
    const RotationMatrix &chain() const { return chain_; }
    double time() const { return t_; }

    /// Finish the open row and start the next one at the current time.
    ConstraintRow close_row() {
        if (empty()) throw UsageError("ConstraintAccumulator: empty interval");
        ConstraintRow r = row_;
        r.t_end = t_;
        r.eta = -g_ * (r.t_end - r.t_start) * Matrix3::Identity();
        open_row();
        return r;
    }

  private:
    void open_row() {
        row_ = ConstraintRow{};
        row_.t_start = t_;
    }

    double g_;
    double t_;
    RotationMatrix chain_ = RotationMatrix::Identity();
    Matrix3 bias_sum_ = Matrix3::Zero();
    ConstraintRow row_;
};

/// One constraint row with the attitude chain starting at the first increment.
inline ConstraintRow accumulate_row(std::span<const ImuIncrements> increments, double g, double t_start = 0.0) {
    if (increments.empty()) throw UsageError("accumulate_row: empty interval");
    ConstraintAccumulator acc(g, t_start);
    for (const auto &in : increments) acc.add(in);
    return acc.close_row();
}

struct ObservabilityBatch {
    std::vector<ConstraintRow> rows;

    void add(const ConstraintRow &r) { rows.push_back(r); }

    Eigen::MatrixXd K() const {
        Eigen::MatrixXd m(3 * static_cast<Eigen::Index>(rows.size()), 9);
        for (std::size_t i = 0; i < rows.size(); ++i) m.block<3, 9>(3 * static_cast<Eigen::Index>(i), 0) = rows[i].k();
        return m;
    }

    Eigen::VectorXd y() const {
        Eigen::VectorXd v(3 * static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) v.segment<3>(3 * static_cast<Eigen::Index>(i)) = rows[i].alpha;
        return v;
    }
};

constexpr double kRankTolerance = 1e-8; ///< relative to the largest singular value

enum class SolveStatus { FullRank, RankDeficient };

struct BatchSolution {
    SolveStatus status = SolveStatus::RankDeficient;
    int rank = 0;
    Vector9 X = Vector9::Zero();          ///< valid when status == FullRank
    Eigen::MatrixXd null_space;           ///< 9 x (9 - rank), valid when rank deficient
    Eigen::VectorXd singular_values;      ///< descending
    double residual = 0.0;                ///< |K X - y| when full rank

    Vector3 accel_bias() const { return X.segment<3>(0); }
    Vector3 gyro_bias() const { return X.segment<3>(3); }
    Vector3 x_theta() const { return X.segment<3>(6); }
};

/// Least-squares X from a rank-revealing SVD of K.
inline BatchSolution solve_batch(const ObservabilityBatch &b, double rank_tol = kRankTolerance) {
    if (b.rows.size() < 3) throw UsageError("solve_batch: need at least 3 constraint rows");
    const Eigen::MatrixXd K = b.K();
    const Eigen::VectorXd y = b.y();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(K, Eigen::ComputeThinU | Eigen::ComputeFullV);
    BatchSolution s;
    s.singular_values = svd.singularValues();
    const double smax = s.singular_values(0);
    for (Eigen::Index i = 0; i < s.singular_values.size(); ++i) s.rank += s.singular_values(i) > rank_tol * smax;
    if (s.rank < 9) {
        s.status = SolveStatus::RankDeficient;
        s.null_space = svd.matrixV().rightCols(9 - s.rank);
        return s;
    }
    s.status = SolveStatus::FullRank;
    s.X = svd.solve(y);
    s.residual = (K * s.X - y).norm();
    return s;
}

/// Eigenvalues of K^T K in ascending order.
inline std::vector<double> eigen_spectrum(const ObservabilityBatch &b) {
    if (b.rows.empty()) throw UsageError("eigen_spectrum: empty batch");
    const Eigen::MatrixXd K = b.K();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(K.transpose() * K, Eigen::EigenvaluesOnly);
    const Vector9 ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

/// Up direction in body axes for given level angles:
/// (sin pitch, cos roll cos pitch, -sin roll cos pitch).
inline Vector3 x_theta_from_level(double roll, double pitch) {
    return {std::sin(pitch), std::cos(roll) * std::cos(pitch), -std::sin(roll) * std::cos(pitch)};
}

struct LevelAngles {
    double roll = 0.0;
    double pitch = 0.0;
};

inline LevelAngles level_from_x_theta(const Vector3 &x) {
    const Vector3 u = x.normalized();
    return {std::atan2(-u.z(), u.y()), std::asin(std::clamp(u.x(), -1.0, 1.0))};
}

/// One increment per propagation step (three raw samples, sharing ends).
inline std::vector<ImuIncrements> increments_from_stream(std::span<const ImuSample> s) {
    std::vector<ImuIncrements> out;
    for (std::size_t i = 0; i + 2 < s.size(); i += 2) out.push_back(increments_from_samples(s[i], s[i + 1], s[i + 2]));
    return out;
}

/// Batch growth along a walk: one row per pair of consecutive stance onsets.
struct ObservabilityTrace {
    ObservabilityBatch batch;
    std::vector<std::vector<double>> spectra; ///< eigenvalues after each row
};

/// Propagation epochs (even sample indices) at the middle of each stance
/// phase, in order.
inline std::vector<std::size_t> mid_stance_epochs(const std::vector<bool> &stance) {
    std::vector<std::size_t> mids;
    std::size_t i = 0;
    while (i < stance.size()) {
        if (!stance[i]) {
            i += 2;
            continue;
        }
        const std::size_t start = i;
        while (i < stance.size() && stance[i]) i += 2;
        mids.push_back(start + ((i - start) / 4) * 2);
    }
    return mids;
}

/// Rows from one foot's raw stream, one per pair of consecutive mid-stance
/// epochs. The stream starts at an even sample index so that propagation
/// epochs are the even indices.
inline ObservabilityTrace observability_trace(std::span<const ImuSample> stream, const std::vector<bool> &stance,
                                              double g) {
    if (stance.size() != stream.size()) throw UsageError("observability_trace: flag count mismatch");
    const std::vector<std::size_t> mids = mid_stance_epochs(stance);
    if (mids.size() < 2) throw UsageError("observability_trace: need at least two stance phases");

    ObservabilityTrace trace;
    ConstraintAccumulator acc(g, stream[mids.front()].t);
    for (std::size_t m = 1; m < mids.size(); ++m) {
        for (std::size_t i = mids[m - 1]; i < mids[m]; i += 2) {
            acc.add(increments_from_samples(stream[i], stream[i + 1], stream[i + 2]));
        }
        trace.batch.add(acc.close_row());
        trace.spectra.push_back(eigen_spectrum(trace.batch));
    }
    return trace;
}

} // namespace stridenav
