// Stance-phase detection (angular-rate energy) and the height-change trigger
// for the ellipsoid constraint.
#pragma once

#include <stridenav/strapdown.hpp>

#include <span>
#include <vector>

namespace stridenav {

struct DetectorConfig {
    int window_len = 5;       ///< samples
    double threshold = 0.05;  ///< (rad/s)^2
    double epsilon_h = 0.1;   ///< [m], max height change between stances
    int hold_min = 3;         ///< consecutive positive windows before stance

    void validate() const {
        if (window_len < 1 || !(threshold > 0.0) || !(epsilon_h > 0.0) || hold_min < 1) {
            throw UsageError("DetectorConfig: need window_len >= 1, threshold > 0, epsilon_h > 0, hold_min >= 1");
        }
    }
};

struct StanceEvent {
    double t_start = 0.0;
    double t_end = 0.0;
    Foot foot = Foot::Left;
};

/// Mean squared gyro norm over the window, (1/N) sum |omega_i|^2.
inline double are_statistic(std::span<const ImuSample> window) {
    double sum = 0.0;
    for (const auto &s : window) sum += s.gyro.squaredNorm();
    return window.empty() ? 0.0 : sum / static_cast<double>(window.size());
}

/// True when the window is stationary (statistic strictly below threshold).
inline bool are_detect(std::span<const ImuSample> window, const DetectorConfig &cfg) {
    if (static_cast<int>(window.size()) != cfg.window_len) {
        throw UsageError("are_detect: window has " + std::to_string(window.size()) +
                         " samples, expected " + std::to_string(cfg.window_len));
    }
    return are_statistic(window) < cfg.threshold;
}

/// Ellipsoid constraint applies when the height change between two stances
/// is strictly below epsilon_h.
inline bool ellipsoid_trigger(double h_prev, double h_curr, const DetectorConfig &cfg) {
    return std::abs(h_prev - h_curr) < cfg.epsilon_h;
}

/// Per-foot hysteresis: stance is declared only after hold_min consecutive
/// stationary windows. One instance per foot.
class StanceHold {
  public:
    explicit StanceHold(int hold_min) : hold_min_(hold_min) {}

    bool update(bool stationary) {
        run_ = stationary ? run_ + 1 : 0;
        return run_ >= hold_min_;
    }
    void reset() { run_ = 0; }

  private:
    int hold_min_;
    int run_ = 0;
};

/// Window of cfg.window_len samples centred on index i, shifted inwards at
/// the ends of the stream. Requires stream.size() >= window_len.
inline std::span<const ImuSample> centred_window(std::span<const ImuSample> stream, std::size_t i,
                                                 const DetectorConfig &cfg) {
    const std::size_t n = static_cast<std::size_t>(cfg.window_len);
    const std::size_t half = n / 2;
    std::size_t start = i >= half ? i - half : 0;
    if (start + n > stream.size()) start = stream.size() - n;
    return stream.subspan(start, n);
}

/// Stance flag for every sample of one foot's stream.
inline std::vector<bool> detect_stance(std::span<const ImuSample> stream, const DetectorConfig &cfg) {
    cfg.validate();
    std::vector<bool> flags(stream.size(), false);
    if (stream.size() < static_cast<std::size_t>(cfg.window_len)) return flags;
    StanceHold hold(cfg.hold_min);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        flags[i] = hold.update(are_detect(centred_window(stream, i, cfg), cfg));
    }
    return flags;
}

/// Collapse per-sample flags into contiguous stance intervals.
inline std::vector<StanceEvent> stance_events(std::span<const ImuSample> stream,
                                              const std::vector<bool> &flags, Foot foot) {
    std::vector<StanceEvent> events;
    for (std::size_t i = 0; i < flags.size() && i < stream.size(); ++i) {
        if (!flags[i]) continue;
        if (i > 0 && flags[i - 1] && !events.empty()) {
            events.back().t_end = stream[i].t;
        } else {
            events.push_back({stream[i].t, stream[i].t, foot});
        }
    }
    return events;
}

struct DetectionScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline DetectionScore make_score(double tp, double fp, double fn) {
    DetectionScore s;
    s.precision = tp + fp > 0 ? tp / (tp + fp) : 1.0;
    s.recall = tp + fn > 0 ? tp / (tp + fn) : 1.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

/// Sample-level agreement between detected and reference stance flags.
inline DetectionScore sample_score(const std::vector<bool> &truth, const std::vector<bool> &detected) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < std::min(truth.size(), detected.size()); ++i) {
        tp += truth[i] && detected[i];
        fp += !truth[i] && detected[i];
        fn += truth[i] && !detected[i];
    }
    return make_score(tp, fp, fn);
}

/// Event-level agreement: a detected interval is a true positive when it
/// overlaps exactly one reference interval and vice versa.
inline DetectionScore event_score(const std::vector<StanceEvent> &truth,
                                  const std::vector<StanceEvent> &detected) {
    auto overlaps = [](const StanceEvent &a, const StanceEvent &b) {
        return a.t_start <= b.t_end && b.t_start <= a.t_end;
    };
    auto matched = [&](const StanceEvent &e, const std::vector<StanceEvent> &others) {
        int hits = 0;
        for (const auto &o : others) hits += overlaps(e, o);
        return hits == 1;
    };
    double tp = 0, fp = 0, fn = 0;
    for (const auto &d : detected) (matched(d, truth) ? tp : fp) += 1;
    for (const auto &t : truth) fn += !matched(t, detected);
    return make_score(tp, fp, fn);
}

} // namespace stridenav
