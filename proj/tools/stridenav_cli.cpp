// stridenav command line: simulate | replay | observe.
//
// Exit codes: 0 success, 1 usage or configuration, 2 data or IO,
// 3 filter divergence (outputs are still written).
#include <stridenav/stridenav.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace stridenav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;

struct Options {
    std::string preset = "default";
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> variants;
};

RunConfig preset_config(const std::string &name) {
    if (name == "default") return RunConfig{};
    if (name == "long-walk") return long_walk_config();
    if (name == "same-sign") return same_sign_bias_config();
    if (name == "observability") return observability_config();
    throw UsageError("unknown preset '" + name + "'");
}

RunConfig build_config(const Options &o, RunMode mode) {
    RunConfig cfg = preset_config(o.preset);
    if (!o.config.empty()) cfg = load_config(o.config, cfg);
    cfg.mode = mode;
    if (o.seed) cfg.seed = *o.seed;
    if (!o.variants.empty()) {
        cfg.variants.clear();
        for (const auto &v : o.variants) cfg.variants.push_back(parse_variant(v));
    }
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const std::string &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ParseError("cannot create output directory '" + dir + "': " + ec.message());
    return fs::path(dir);
}

int report(const PipelineResult &res) {
    for (const auto &s : res.summaries) {
        std::cout << variant_name(s.variant) << ": " << (s.diverged ? "diverged (" + s.message + ")" : "ok");
        if (s.has_reference && !s.diverged) {
            std::cout << ", position error L " << s.feet[0].position_error << " m, R " << s.feet[1].position_error
                      << " m, relative " << s.relative_position_error << " m, relative yaw "
                      << s.relative_yaw_error / kDeg << " deg";
        }
        std::cout << '\n';
    }
    return res.diverged() ? kExitDiverged : kExitOk;
}

int cmd_simulate(const Options &o) {
    const RunConfig cfg = build_config(o, RunMode::Simulate);
    const fs::path out = prepare_out(o.out);
    const Simulation sim = simulate(cfg);
    write_logs(out, sim.inputs);
    write_text(out / "reference.json", reference_to_json(sim.reference).dump(2) + "\n");
    const PipelineResult res = run_variants(sim.inputs, cfg, sim.reference);
    write_results(out, res);
    return report(res);
}

int cmd_replay(const Options &o) {
    const RunConfig cfg = build_config(o, RunMode::Replay);
    const fs::path out = prepare_out(o.out);
    auto [imu, ranges] = parse_logs(cfg.io.imu, cfg.io.range);
    RunInputs in{std::move(imu.left), std::move(imu.right), std::move(ranges)};
    std::optional<Reference> ref;
    if (!cfg.io.reference.empty()) ref = load_reference(cfg.io.reference);
    const PipelineResult res = run_variants(in, cfg, ref);
    write_results(out, res);
    return report(res);
}

int cmd_observe(const Options &o) {
    const RunConfig cfg = build_config(o, RunMode::Observability);
    const fs::path out = prepare_out(o.out);
    const Simulation sim = simulate(cfg);
    nlohmann::json all;
    for (Foot f : {Foot::Left, Foot::Right}) {
        const FootObservability obs = observe_foot(sim, cfg.gait, f);
        const std::string tag(1, foot_tag(f));
        auto csv = open_output((out / ("spectrum_" + tag + ".csv")).string());
        write_spectrum_csv(csv, obs.trace);
        all[tag] = observability_to_json(obs);
        std::cout << tag << ": " << obs.trace.batch.rows.size() << " rows, rank " << obs.solution.rank << '\n';
    }
    write_text(out / "observability.json", all.dump(2) + "\n");
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Dual foot-mounted IMU pedestrian navigation"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&opt](CLI::App *sub) {
        sub->add_option("--preset", opt.preset, "Base scenario")
            ->check(CLI::IsMember({"default", "long-walk", "same-sign", "observability"}));
        sub->add_option("--config", opt.config, "JSON configuration applied on top of the preset");
        sub->add_option("--out", opt.out, "Output directory");
        sub->add_option("--seed", opt.seed, "Simulation seed");
    };
    auto add_variant = [&opt](CLI::App *sub) {
        sub->add_option("--variant", opt.variants, "Filter variant, repeatable")
            ->check(CLI::IsMember({"zupt", "zupt-rng", "zupt-rng-ec"}));
    };

    CLI::App *sim = app.add_subcommand("simulate", "Simulate a walk, write logs and run the filters");
    add_common(sim);
    add_variant(sim);
    CLI::App *rep = app.add_subcommand("replay", "Run the filters on recorded logs");
    add_common(rep);
    add_variant(rep);
    CLI::App *obs = app.add_subcommand("observe", "Batch observability study on a simulated walk");
    add_common(obs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*sim) return cmd_simulate(opt);
        if (*rep) return cmd_replay(opt);
        return cmd_observe(opt);
    } catch (const UsageError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
