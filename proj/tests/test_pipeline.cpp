#include <stridenav/stridenav.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace stridenav;
namespace fs = std::filesystem;

namespace {

class TempDir {
  public:
    explicit TempDir(const std::string &name) : path_(fs::temp_directory_path() / ("stridenav_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path &path() const { return path_; }

  private:
    fs::path path_;
};

std::string slurp(const fs::path &p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path &p, const std::string &text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

/// Two-lap, five-stride long-walk variant: fast but exercises turns.
RunConfig small_config() {
    RunConfig c = long_walk_config();
    c.scenario = {5, 2};
    c.variants = {Variant::Zupt, Variant::ZuptRng, Variant::ZuptRngEc};
    return c;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string &args, const fs::path &dir) {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd =
        std::string(STRIDENAV_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void expect_same_summary(const Summary &a, const Summary &b) {
    EXPECT_EQ(a.variant, b.variant);
    EXPECT_EQ(a.epochs, b.epochs);
    EXPECT_NEAR(a.relative_position_error, b.relative_position_error, 1e-12);
    EXPECT_NEAR(a.relative_yaw_error, b.relative_yaw_error, 1e-12);
    EXPECT_NEAR(a.relative_yaw_bias_error, b.relative_yaw_bias_error, 1e-12);
    for (int f = 0; f < 2; ++f) {
        EXPECT_NEAR(a.feet[f].position_error, b.feet[f].position_error, 1e-12);
        EXPECT_NEAR(a.feet[f].height_error, b.feet[f].height_error, 1e-12);
        EXPECT_NEAR(a.feet[f].yaw_error, b.feet[f].yaw_error, 1e-12);
    }
}

} // namespace

TEST(Variant, NamesRoundTrip) {
    for (Variant v : {Variant::Zupt, Variant::ZuptRng, Variant::ZuptRngEc}) EXPECT_EQ(parse_variant(variant_name(v)), v);
    EXPECT_EQ(variant_name(Variant::ZuptRngEc), "zupt-rng-ec");
    EXPECT_THROW(parse_variant("rng"), UsageError);
    EXPECT_TRUE(features(Variant::ZuptRngEc).ellipsoid);
    EXPECT_FALSE(features(Variant::Zupt).range);
}

TEST(Config, DefaultsValidate) {
    EXPECT_NO_THROW(RunConfig{}.validate());
    EXPECT_NO_THROW(long_walk_config().validate());
    EXPECT_NO_THROW(observability_config().validate());
}

TEST(Config, LongWalkPresetMatchesScenario) {
    const RunConfig c = long_walk_config();
    EXPECT_NEAR(square_walk_distance(c.gait, c.scenario.side_strides, c.scenario.laps), 1040.0, 1e-9);
    EXPECT_NEAR(square_walk_duration(c.gait, c.scenario.side_strides, c.scenario.laps), 966.4, 1e-9);
    EXPECT_LT((c.gait.gyro_bias[0] - Vector3(2.0, 2.3, 1.7) * kDeg).norm(), 1e-15);
    EXPECT_LT((c.filter.initial.gyro_bias[0] - Vector3(1.7, 1.6, 1.3) * kDeg).norm(), 1e-15);
    EXPECT_LT((c.filter.initial.gyro_bias[1] - Vector3(2.5, 2.8, 1.0) * kDeg).norm(), 1e-15);
    // Heading bias errors: opposite signs here, same sign in the same-sign preset.
    const RunConfig same = same_sign_bias_config();
    const double eL = same.filter.initial.gyro_bias[0].y() - same.gait.gyro_bias[0].y();
    const double eR = same.filter.initial.gyro_bias[1].y() - same.gait.gyro_bias[1].y();
    EXPECT_NEAR(eL / kDeg, 0.3, 1e-12);
    EXPECT_NEAR(eR / kDeg, 0.5, 1e-12);
}

TEST(Config, ParsesGaitSymbolNames) {
    const auto j = nlohmann::json::parse(R"({
        "mode": "replay", "seed": 7,
        "gait": {"l_s": 1.1, "l_h": 0.1, "t_u": 0.7, "t_s": 0.5, "theta_max": 0.4, "n_r": 0.03,
                 "b_g_L": [1, 2, 3], "start": {"lat_deg": 10, "lon_deg": 20, "h": 5}},
        "scenario": {"side_strides": 4, "laps": 2},
        "filter": {"variants": ["zupt-rng-ec"], "sigma_d": 0.1, "gating": true,
                   "detector": {"threshold": 0.07},
                   "initial": {"attitude_error_L_deg": [1, 2, 3], "sigma_level_deg": 3}},
        "io": {"imu": "/data/imu.csv"}
    })");
    const RunConfig c = config_from_json(j);
    EXPECT_EQ(c.mode, RunMode::Replay);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.gait.stride_length, 1.1);
    EXPECT_EQ(c.gait.max_pitch, 0.4);
    EXPECT_EQ(c.gait.noise.range_sigma, 0.03);
    EXPECT_LT((c.gait.gyro_bias[0] - Vector3(1, 2, 3) * kDeg).norm(), 1e-15);
    EXPECT_NEAR(c.gait.start.latitude, 10 * kDeg, 1e-15);
    EXPECT_EQ(c.scenario.side_strides, 4);
    ASSERT_EQ(c.variants.size(), 1u);
    EXPECT_EQ(c.variants[0], Variant::ZuptRngEc);
    EXPECT_EQ(c.filter.noise.sigma_d, 0.1);
    EXPECT_TRUE(c.filter.update.gating);
    EXPECT_EQ(c.filter.detector.threshold, 0.07);
    EXPECT_NEAR(c.filter.initial.attitude_error[0].yaw, 2 * kDeg, 1e-15);
    EXPECT_NEAR(c.filter.uncertainty.level_rad, 3 * kDeg, 1e-15);
    EXPECT_EQ(c.io.imu, "/data/imu.csv");
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, AbsentKeysKeepBaseValues) {
    const RunConfig base = long_walk_config();
    const RunConfig c = config_from_json(
        nlohmann::json::parse(R"({"gait": {}, "scenario": {}, "filter": {"detector": {}, "initial": {}}})"), base);
    for (int f = 0; f < 2; ++f) {
        EXPECT_EQ(c.gait.gyro_bias[f], base.gait.gyro_bias[f]);
        EXPECT_EQ(c.gait.accel_bias[f], base.gait.accel_bias[f]);
        EXPECT_EQ(c.gait.lever_arm[f], base.gait.lever_arm[f]);
        EXPECT_EQ(c.filter.initial.gyro_bias[f], base.filter.initial.gyro_bias[f]);
        EXPECT_EQ(c.filter.initial.accel_bias[f], base.filter.initial.accel_bias[f]);
        EXPECT_EQ(c.filter.initial.attitude_error[f].yaw, base.filter.initial.attitude_error[f].yaw);
    }
    EXPECT_DOUBLE_EQ(c.gait.noise.gyro_density, base.gait.noise.gyro_density);
    EXPECT_DOUBLE_EQ(c.gait.noise.accel_density, base.gait.noise.accel_density);
    EXPECT_DOUBLE_EQ(c.gait.start.latitude, base.gait.start.latitude);
    EXPECT_DOUBLE_EQ(c.filter.noise.sigma_g, base.filter.noise.sigma_g);
    EXPECT_DOUBLE_EQ(c.filter.noise.sigma_a, base.filter.noise.sigma_a);
    EXPECT_DOUBLE_EQ(c.filter.uncertainty.level_rad, base.filter.uncertainty.level_rad);
    EXPECT_DOUBLE_EQ(c.filter.uncertainty.gyro_bias, base.filter.uncertainty.gyro_bias);
    EXPECT_EQ(c.scenario.laps, base.scenario.laps);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
    auto parse = [](const char *text) { return config_from_json(nlohmann::json::parse(text)); };
    EXPECT_THROW(parse(R"({"gate": {}})"), UsageError);
    EXPECT_THROW(parse(R"({"gait": {"stride": 1.3}})"), UsageError);
    EXPECT_THROW(parse(R"({"filter": {"detector": {"window": 5}}})"), UsageError);
    EXPECT_THROW(parse(R"({"gait": {"l_s": "1.3"}})"), UsageError);
    EXPECT_THROW(parse(R"({"gait": {"b_g_L": [1, 2]}})"), UsageError);
    EXPECT_THROW(parse(R"({"scenario": {"laps": 1.5}})"), UsageError);
    EXPECT_THROW(parse(R"({"mode": "fly"})"), UsageError);
    EXPECT_THROW(parse(R"({"seed": -1})"), UsageError);
    EXPECT_THROW(parse(R"({"filter": {"variants": ["kalman"]}})"), UsageError);
}

TEST(Config, ValidationCatchesInconsistentValues) {
    RunConfig c;
    c.mode = RunMode::Replay;
    EXPECT_THROW(c.validate(), UsageError);
    c = RunConfig{};
    c.gait.range_rate = 30.0;
    EXPECT_THROW(c.validate(), UsageError);
    c = RunConfig{};
    c.variants.clear();
    EXPECT_THROW(c.validate(), UsageError);
    c = RunConfig{};
    c.filter.noise.sigma_v = 0.0;
    EXPECT_THROW(c.validate(), UsageError);
}

TEST(Config, LoadResolvesRelativePathsAndKeepsBase) {
    const TempDir dir("config");
    spit(dir.path() / "run.json", R"({"io": {"imu": "imu.csv", "range": "/abs/range.csv"}})");
    const RunConfig c = load_config((dir.path() / "run.json").string(), long_walk_config());
    EXPECT_EQ(c.io.imu, (dir.path() / "imu.csv").string());
    EXPECT_EQ(c.io.range, "/abs/range.csv");
    EXPECT_EQ(c.scenario.laps, 8);
    spit(dir.path() / "bad.json", "{ not json");
    EXPECT_THROW(load_config((dir.path() / "bad.json").string()), UsageError);
    EXPECT_THROW(load_config((dir.path() / "missing.json").string()), ParseError);
}

TEST(Summary, ZeroErrorsWhenEstimateIsTruth) {
    const RunConfig c = small_config();
    const Simulation sim = simulate(c);
    FilterRun run;
    for (Foot f : {Foot::Left, Foot::Right}) {
        const FootTruth &ft = sim.walk.truth.back().feet[foot_index(f)];
        NavState &n = run.final_state.foot(f);
        n.p_e = ft.p_e;
        n.C_be = truth_attitude(ft);
        n.b_g = c.gait.gyro_bias[foot_index(f)];
    }
    const Summary s = summarize(run, c.gait.start, sim.reference);
    EXPECT_LT(s.relative_position_error, 1e-9);
    EXPECT_LT(s.relative_yaw_error, 1e-12);
    EXPECT_LT(s.relative_yaw_bias_error, 1e-15);
    for (int f = 0; f < 2; ++f) {
        EXPECT_LT(s.feet[f].position_error, 1e-9);
        EXPECT_LT(std::abs(s.feet[f].height_error), 1e-9);
    }
}

TEST(Summary, ShiftedEstimateShowsAsError) {
    const RunConfig c = small_config();
    const Simulation sim = simulate(c);
    FilterRun run;
    const RotationMatrix C_ne = n_to_e_rotation(c.gait.start);
    for (Foot f : {Foot::Left, Foot::Right}) {
        const FootTruth &ft = sim.walk.truth.back().feet[foot_index(f)];
        NavState &n = run.final_state.foot(f);
        n.p_e = ft.p_e + C_ne * Vector3(3.0, 0.0, f == Foot::Left ? 4.0 : 0.0);
        n.C_be = truth_attitude(ft);
    }
    const Summary s = summarize(run, c.gait.start, sim.reference);
    EXPECT_NEAR(s.feet[0].position_error, 5.0, 1e-6);
    EXPECT_NEAR(s.feet[1].position_error, 3.0, 1e-6);
    EXPECT_NEAR(s.relative_position_error, 4.0, 1e-6);
}

TEST(RunFilter, RejectsUnsynchronizedStreams) {
    const RunConfig c = small_config();
    Simulation sim = simulate(c);
    sim.inputs.right.pop_back();
    EXPECT_THROW(run_filter(sim.inputs, c.gait, c.filter, Variant::Zupt), ParseError);
    sim = simulate(c);
    sim.inputs.right[10].t += 1e-3;
    EXPECT_THROW(run_filter(sim.inputs, c.gait, c.filter, Variant::Zupt), ParseError);
}

TEST(RunFilter, RecordsAreMonotonePerFoot) {
    const RunConfig c = small_config();
    const Simulation sim = simulate(c);
    const FilterRun run = run_filter(sim.inputs, c.gait, c.filter, Variant::ZuptRng);
    ASSERT_FALSE(run.diverged);
    std::array<double, 2> last{-1.0, -1.0};
    for (const auto &r : run.records) {
        ASSERT_GT(r.t, last[foot_index(r.foot)]);
        last[foot_index(r.foot)] = r.t;
        ASSERT_EQ(r.variant, "zupt-rng");
    }
    EXPECT_GT(run.counts.zupt, 0);
    EXPECT_GT(run.counts.range, 0);
    EXPECT_EQ(run.counts.ellipsoid, 0);
}

TEST(Pipeline, SameSeedIsDeterministic) {
    const RunConfig c = small_config();
    const Simulation a = simulate(c), b = simulate(c);
    std::ostringstream la, lb;
    write_imu_csv(la, a.inputs.left, a.inputs.right);
    write_imu_csv(lb, b.inputs.left, b.inputs.right);
    EXPECT_EQ(la.str(), lb.str());
    const PipelineResult ra = run_variants(a.inputs, c, a.reference), rb = run_variants(b.inputs, c, b.reference);
    std::ostringstream sa, sb;
    write_summary_csv(sa, ra.summaries);
    write_summary_csv(sb, rb.summaries);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Pipeline, SerializationIsTransparent) {
    const TempDir dir("transparency");
    const RunConfig c = small_config();
    const Simulation sim = simulate(c);
    const PipelineResult direct = run_variants(sim.inputs, c, sim.reference);

    write_logs(dir.path(), sim.inputs);
    write_text(dir.path() / "reference.json", reference_to_json(sim.reference).dump(2));
    auto [imu, ranges] = parse_logs((dir.path() / "imu.csv").string(), (dir.path() / "range.csv").string());
    const RunInputs in{imu.left, imu.right, ranges};
    const PipelineResult replayed = run_variants(in, c, load_reference((dir.path() / "reference.json").string()));
    ASSERT_EQ(direct.summaries.size(), replayed.summaries.size());
    for (std::size_t k = 0; k < direct.summaries.size(); ++k) {
        expect_same_summary(direct.summaries[k], replayed.summaries[k]);
    }
}

TEST(Pipeline, FeatureFlagsImproveRelativeYaw) {
    // Mean relative-yaw end error over five seeds on the long walk.
    RunConfig c = long_walk_config();
    c.variants = {Variant::Zupt, Variant::ZuptRng, Variant::ZuptRngEc};
    std::array<double, 3> mean{};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        c.seed = seed;
        const Simulation sim = simulate(c);
        RunOptions opt;
        opt.record = false;
        const PipelineResult r = run_variants(sim.inputs, c, sim.reference, opt);
        for (int k = 0; k < 3; ++k) {
            ASSERT_FALSE(r.summaries[k].diverged) << r.summaries[k].message;
            mean[k] += r.summaries[k].relative_yaw_error / 5.0;
        }
    }
    RecordProperty("mean_relative_yaw_deg", std::to_string(mean[0] / kDeg) + " " + std::to_string(mean[1] / kDeg) +
                                                " " + std::to_string(mean[2] / kDeg));
    EXPECT_GE(mean[0], mean[1]);
    EXPECT_GE(mean[1], mean[2]);
}

TEST(Cli, SimulateThenReplayGivesIdenticalSummary) {
    const TempDir dir("cli");
    spit(dir.path() / "small.json", R"({"scenario": {"side_strides": 3, "laps": 1}})");
    const std::string sim_dir = (dir.path() / "sim").string();
    const CliResult s = run_cli("simulate --preset long-walk --config " + (dir.path() / "small.json").string() +
                                    " --out " + sim_dir + " --variant zupt-rng",
                                dir.path());
    ASSERT_EQ(s.code, 0) << s.err;
    EXPECT_NE(s.out.find("zupt-rng: ok"), std::string::npos);
    for (const char *name : {"imu.csv", "range.csv", "reference.json", "summary.json", "summary.csv",
                             "trajectory_zupt-rng.csv", "trajectory_zupt-rng.geojson"}) {
        EXPECT_TRUE(fs::exists(fs::path(sim_dir) / name)) << name;
    }

    spit(fs::path(sim_dir) / "replay.json", R"({"scenario": {"side_strides": 3, "laps": 1},
        "io": {"imu": "imu.csv", "range": "range.csv", "reference": "reference.json"}})");
    const std::string rep_dir = (dir.path() / "rep").string();
    const CliResult r = run_cli("replay --preset long-walk --config " + sim_dir + "/replay.json --out " + rep_dir +
                                    " --variant zupt-rng",
                                dir.path());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(fs::path(sim_dir) / "summary.json"), slurp(fs::path(rep_dir) / "summary.json"));
    EXPECT_EQ(slurp(fs::path(sim_dir) / "trajectory_zupt-rng.csv"), slurp(fs::path(rep_dir) / "trajectory_zupt-rng.csv"));
}

TEST(Cli, ExitCodes) {
    const TempDir dir("cli_codes");
    EXPECT_EQ(run_cli("--help", dir.path()).code, 0);
    EXPECT_EQ(run_cli("", dir.path()).code, 1);
    EXPECT_EQ(run_cli("simulate --variant kalman", dir.path()).code, 1);

    spit(dir.path() / "unknown.json", R"({"gait": {"stride": 1.0}})");
    const CliResult u = run_cli("simulate --config " + (dir.path() / "unknown.json").string(), dir.path());
    EXPECT_EQ(u.code, 1);
    EXPECT_NE(u.err.find("unknown key 'stride'"), std::string::npos) << u.err;

    spit(dir.path() / "imu.csv", "t,foot,gx,gy,gz,ax,ay,az\n0,L,0,0,0,0,9.8,0\n0,R,0,0,0,0,9.8,zz\n");
    spit(dir.path() / "replay.json", R"({"io": {"imu": "imu.csv"}})");
    const CliResult p = run_cli("replay --config " + (dir.path() / "replay.json").string() + " --out " +
                                    (dir.path() / "o").string(),
                                dir.path());
    EXPECT_EQ(p.code, 2);
    EXPECT_NE(p.err.find("line 3"), std::string::npos) << p.err;

    spit(dir.path() / "noimu.json", R"({"io": {}})");
    EXPECT_EQ(run_cli("replay --config " + (dir.path() / "noimu.json").string(), dir.path()).code, 1);
}

TEST(Cli, ObserveWritesSpectra) {
    const TempDir dir("cli_observe");
    const std::string out = (dir.path() / "obs").string();
    const CliResult r = run_cli("observe --preset observability --out " + out, dir.path());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(fs::path(out) / "observability.json"));
    EXPECT_EQ(j["L"]["status"], "full-rank");
    EXPECT_EQ(slurp(fs::path(out) / "spectrum_R.csv").rfind("row,t_end,ev0", 0), 0u);
}
