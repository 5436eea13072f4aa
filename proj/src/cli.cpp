#include "dpuconfig/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dpuconfig/agent.hpp"
#include "dpuconfig/controller.hpp"
#include "dpuconfig/corpus.hpp"
#include "dpuconfig/evaluator.hpp"
#include "dpuconfig/run_config.hpp"

namespace dpuconfig {

namespace {

namespace fs = std::filesystem;

struct Flags {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    std::optional<std::string> run_name;
    std::optional<std::uint64_t> episodes;
    std::optional<double> fps_constraint;
    std::optional<fs::path> corpus;
    std::optional<fs::path> manifest;
    std::optional<double> lambda;
    std::optional<double> alpha;
    std::optional<double> learning_rate;
    std::optional<double> clip_epsilon;
    std::optional<fs::path> checkpoint;
    std::optional<fs::path> scenario;
    bool include_n = false;
    std::string models = "test";
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "Run configuration JSON");
    cmd->add_option("--seed", f.seed, "Seed for corpus noise and training");
    cmd->add_option("--out", f.out, "Parent directory for run outputs");
    cmd->add_option("--run-name", f.run_name, "Run directory name (default: timestamp)");
    cmd->add_option("--fps-constraint", f.fps_constraint, "Minimum acceptable fps");
    cmd->add_option("--corpus", f.corpus, "Measurement CSV to replay instead of generating");
    cmd->add_option("--manifest", f.manifest, "Model manifest JSON");
    cmd->add_option("--lambda", f.lambda, "Global-baseline weight in [0, 1]");
    cmd->add_option("--alpha", f.alpha, "Reward temperature > 0");
}

void apply_flags(RunConfig& c, const Flags& f) {
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.output_dir = *f.out;
    if (f.episodes) c.episodes = *f.episodes;
    if (f.fps_constraint) c.fps_constraint = *f.fps_constraint;
    if (f.corpus) c.corpus_csv = *f.corpus;
    if (f.manifest) c.model_manifest = *f.manifest;
    if (f.lambda) c.reward.lambda = *f.lambda;
    if (f.alpha) c.reward.alpha = *f.alpha;
    if (f.learning_rate) c.ppo.learning_rate = *f.learning_rate;
    if (f.clip_epsilon) c.ppo.clip_epsilon = *f.clip_epsilon;
    if (f.include_n &&
        std::find(c.eval_workloads.begin(), c.eval_workloads.end(), WorkloadState::N) == c.eval_workloads.end()) {
        c.eval_workloads.insert(c.eval_workloads.begin(), WorkloadState::N);
    }
}

// File config first, or the one stored in the checkpoint, then flags.
RunConfig resolve_config(const Flags& f, const std::optional<Checkpoint>& checkpoint) {
    RunConfig c;
    if (f.config) {
        c = load_run_config(*f.config);
    } else if (checkpoint && checkpoint->config.is_object()) {
        c = run_config_from_json(checkpoint->config);
    }
    apply_flags(c, f);
    validate_run_config(c);
    return c;
}

std::string timestamp_name(const std::string& command) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << command;
    return s.str();
}

fs::path make_run_dir(const RunConfig& c, const Flags& f, const std::string& command) {
    const fs::path dir = c.output_dir / (f.run_name ? *f.run_name : timestamp_name(command));
    fs::create_directories(dir);
    std::ofstream out(dir / "config.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "config.json").string());
    out << to_json(c).dump(2) << '\n';
    return dir;
}

std::vector<ModelProfile> load_models(const RunConfig& c) {
    return c.model_manifest ? read_manifest(*c.model_manifest) : default_model_set();
}

MeasurementTable load_table(const RunConfig& c, const std::vector<ModelProfile>& models) {
    return c.corpus_csv ? ingest_csv(*c.corpus_csv) : generate_corpus(models, c.resolved_calibration());
}

std::vector<ModelProfile> select_models(const std::vector<ModelProfile>& models, const std::string& which) {
    if (which == "all") return models;
    const auto split = split_train_test(models);
    return which == "train" ? split.train : split.test;
}

Checkpoint require_checkpoint(const Flags& f) {
    if (!f.checkpoint) throw std::runtime_error("--checkpoint is required");
    return load_checkpoint(*f.checkpoint);
}

int cmd_generate_corpus(const Flags& f, std::ostream& out) {
    const auto config = resolve_config(f, std::nullopt);
    const auto models = load_models(config);
    const auto table = generate_corpus(models, config.resolved_calibration());
    const auto dir = make_run_dir(config, f, "generate-corpus");
    write_csv(table, dir / "corpus.csv");
    write_manifest(models, dir / "models.json");
    out << "wrote " << table.size() << " records for " << models.size() << " models to " << dir.string() << '\n';
    return 0;
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto config = resolve_config(f, std::nullopt);
    const auto models = load_models(config);
    const auto table = load_table(config, models);
    const auto split = split_train_test(models);
    const auto dir = make_run_dir(config, f, "train");

    ContextBaselineStore store(config.resolved_reward());
    Environment env(table, config.resolved_calibration(), store, config.normalization());
    TrainOptions options;
    options.episodes = config.episodes;
    options.fps_constraint = config.fps_constraint;
    options.seed = config.seed;
    options.hyper = config.ppo;
    options.on_update = [&err](const TrainingLogEntry& e) {
        if (e.update % 100 == 0) {
            err << "update " << e.update << " episodes " << e.episodes << " mean_reward " << e.mean_reward
                << " constraint_rate " << e.constraint_rate << '\n';
        }
    };
    const auto result = train(env, split.train, config.train_workloads, options);

    save_checkpoint(dir / "checkpoint.json", {result.params, store, to_json(config)});
    std::ofstream log(dir / "training_log.csv");
    if (!log) throw std::runtime_error("cannot write " + (dir / "training_log.csv").string());
    log << "update,episodes,mean_reward,constraint_rate,total_loss,policy_loss,value_loss,entropy,approx_kl,"
           "clip_fraction\n";
    for (const auto& e : result.log) {
        log << e.update << ',' << e.episodes << ',' << format_number(e.mean_reward) << ','
            << format_number(e.constraint_rate) << ',' << format_number(e.loss.total) << ','
            << format_number(e.loss.policy) << ',' << format_number(e.loss.value) << ','
            << format_number(e.loss.entropy) << ',' << format_number(e.loss.approx_kl) << ','
            << format_number(e.loss.clip_fraction) << '\n';
    }
    out << "trained " << config.episodes << " episodes (" << result.log.size() << " updates) on "
        << split.train.size() << " models; checkpoint " << (dir / "checkpoint.json").string() << '\n';
    return 0;
}

int cmd_evaluate(const Flags& f, std::ostream& out) {
    const auto checkpoint = require_checkpoint(f);
    const auto config = resolve_config(f, checkpoint);
    const auto all = load_models(config);
    const auto table = load_table(config, all);
    const auto models = select_models(all, f.models);
    const auto report = evaluate(checkpoint.params, table, models, config.eval_workloads, config.fps_constraint,
                                 config.resolved_calibration(), config.normalization());
    const auto dir = make_run_dir(config, f, "evaluate");
    write_report_csv(report, dir / "report.csv");
    write_summary_csv(report, dir / "summary.csv");
    write_plot_data(report, dir / "plot.json");

    out << std::left << std::setw(10) << "policy" << std::setw(10) << "workload" << std::setw(16)
        << "normalized_ppw" << "constraint_rate\n";
    for (const auto& s : report.summaries) {
        out << std::left << std::setw(10) << s.policy << std::setw(10) << to_char(s.workload) << std::setw(16)
            << std::fixed << std::setprecision(4) << s.mean_normalized_ppw << s.constraint_rate << '\n';
    }
    out << "report written to " << dir.string() << '\n';
    return 0;
}

int cmd_oracle(const Flags& f, std::ostream& out) {
    const auto config = resolve_config(f, std::nullopt);
    const auto models = load_models(config);
    const auto table = load_table(config, models);
    const auto rows = oracle_table(table, models, kAllWorkloads, config.fps_constraint);
    const auto dir = make_run_dir(config, f, "oracle");
    write_oracle_csv(rows, dir / "oracle.csv");
    out << "wrote " << rows.size() << " oracle rows to " << (dir / "oracle.csv").string() << '\n';
    return 0;
}

int cmd_timeline(const Flags& f, std::ostream& out) {
    const auto checkpoint = require_checkpoint(f);
    if (!f.scenario) throw std::runtime_error("--scenario is required");
    const auto arrivals = read_scenario(*f.scenario);
    const auto config = resolve_config(f, checkpoint);
    const auto models = load_models(config);
    const auto table = load_table(config, models);
    const auto decide = agent_decisions(checkpoint.params, config.resolved_calibration(), config.normalization());
    const auto result = run_scenario(arrivals, decide, table, models, config.overheads);
    const auto dir = make_run_dir(config, f, "timeline");
    write_timeline_csv(result.events, dir / "timeline.csv");
    write_timeline_plot(result, dir / "timeline_plot.json");
    write_scenario_summary(result, dir / "summary.json");
    const auto& s = result.summary;
    out << s.arrivals << " arrivals, " << s.reconfigurations << " reconfigurations, overhead "
        << format_number(s.total_overhead_ms) << " ms, mean normalized ppw " << format_number(s.mean_normalized_ppw)
        << "\nwritten to " << dir.string() << '\n';
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"DPU configuration selection: corpus, training, evaluation and timeline"};
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("generate-corpus", "Write a synthetic measurement corpus and model manifest");
    add_common(gen, f);

    auto* tr = app.add_subcommand("train", "Train the PPO agent on the training models");
    add_common(tr, f);
    tr->add_option("--episodes", f.episodes, "Number of single-step episodes");
    tr->add_option("--learning-rate", f.learning_rate, "Adam step size");
    tr->add_option("--clip-epsilon", f.clip_epsilon, "PPO clip range in (0, 1)");

    auto* ev = app.add_subcommand("evaluate", "Compare a checkpoint with the oracle and baselines");
    add_common(ev, f);
    ev->add_option("--checkpoint", f.checkpoint, "Checkpoint JSON")->required();
    ev->add_flag("--include-n", f.include_n, "Also evaluate in workload state N");
    ev->add_option("--models", f.models, "Which models to evaluate")
        ->check(CLI::IsMember({"test", "train", "all"}));

    auto* orc = app.add_subcommand("oracle", "Best feasible configuration per model and workload state");
    add_common(orc, f);

    auto* tl = app.add_subcommand("timeline", "Replay a scenario through the decision loop");
    add_common(tl, f);
    tl->add_option("--checkpoint", f.checkpoint, "Checkpoint JSON")->required();
    tl->add_option("--scenario", f.scenario, "Scenario JSON")->required();

    std::vector<const char*> argv{"dpuconfig"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*gen) return cmd_generate_corpus(f, out);
        if (*tr) return cmd_train(f, out, err);
        if (*ev) return cmd_evaluate(f, out);
        if (*orc) return cmd_oracle(f, out);
        if (*tl) return cmd_timeline(f, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace dpuconfig
