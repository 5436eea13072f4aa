#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "check_helpers.hpp"
#include "dpuconfig/agent.hpp"

using namespace dpuconfig;

namespace {

StateVector some_state(double base = 0.3) {
    StateVector s{};
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = base + 0.01 * static_cast<double>(i);
    return s;
}

double sum(const ActionVector& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

struct SmallWorld {
    CalibrationParams calibration;
    std::vector<ModelProfile> models;
    MeasurementTable table;
    ContextBaselineStore store;

    SmallWorld() {
        const auto refs = reference_models();
        models = {refs[0], refs[2], refs[10]};
        table = generate_corpus(models, calibration);
    }
};

}  // namespace

TEST_CASE("parameter layout") {
    CHECK(layout::kCount == 7387);
    CHECK(layout::kB1 == 64 * 22);
    CHECK(layout::kBv == layout::kCount - 1);
}

TEST_CASE("zero weights give a uniform policy and zero value") {
    const auto p = PolicyParameters::zeros();
    const auto out = policy_forward(p, some_state());
    for (double x : out.probs) CHECK(x == doctest::Approx(1.0 / 26));
    CHECK(out.value == 0.0);
    CHECK(entropy(out.probs) == doctest::Approx(std::log(26.0)));
}

TEST_CASE("initialised policy starts uniform with a random trunk") {
    const auto p = PolicyParameters::initialize(7);
    const auto out = policy_forward(p, some_state());
    CHECK(entropy(out.probs) == doctest::Approx(std::log(26.0)).epsilon(1e-12));
    CHECK(p.theta[layout::kW1] != 0.0);
    CHECK(p.theta[layout::kWp] == 0.0);
    CHECK(p == PolicyParameters::initialize(7));
    CHECK_FALSE(p == PolicyParameters::initialize(8));

    // Trunk spread matches 1/sqrt(fan_in).
    double sq = 0;
    for (std::size_t i = layout::kW2; i < layout::kB2; ++i) sq += p.theta[i] * p.theta[i];
    CHECK(std::sqrt(sq / (64 * 64)) == doctest::Approx(1.0 / 8).epsilon(0.05));
}

TEST_CASE("forward is a deterministic distribution") {
    std::mt19937_64 rng(1);
    const auto theta = checks::random_theta(rng, 1.0);
    const auto a = policy_forward(theta, some_state());
    const auto b = policy_forward(theta, some_state());
    CHECK(a.probs == b.probs);
    CHECK(a.value == b.value);
    CHECK(sum(a.probs) == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t k = 0; k < kActionCount; ++k) {
        CHECK(a.probs[k] >= 0);
        CHECK(a.log_probs[k] == doctest::Approx(std::log(a.probs[k])));
    }
}

TEST_CASE("forward rejects bad inputs") {
    auto s = some_state();
    s[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(policy_forward(PolicyParameters::zeros(), s), std::invalid_argument);
    CHECK_THROWS_AS(policy_forward(std::vector<double>(10), some_state()), std::invalid_argument);
}

TEST_CASE("sample_action") {
    std::mt19937_64 rng(42);
    ActionVector onehot{};
    onehot[7] = 1.0;
    for (int i = 0; i < 100; ++i) {
        const auto s = sample_action(onehot, rng);
        CHECK(s.action == 7);
        CHECK(s.log_prob == 0.0);
    }

    ActionVector zeros{};
    CHECK_THROWS_AS(sample_action(zeros, rng), std::invalid_argument);
    ActionVector negative{};
    negative[0] = 2;
    negative[1] = -1;
    CHECK_THROWS_AS(sample_action(negative, rng), std::invalid_argument);
}

TEST_CASE("uniform sampling frequencies") {
    ActionVector uniform;
    uniform.fill(1.0 / 26);
    std::mt19937_64 rng(2024);
    std::array<int, kActionCount> counts{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto s = sample_action(uniform, rng);
        CHECK(s.log_prob == doctest::Approx(-std::log(26.0)));
        ++counts[s.action];
    }
    for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 1.0 / 26) < 0.005);
}

TEST_CASE("sampling is reproducible under a fixed seed") {
    std::mt19937_64 rng0(3);
    const auto theta = checks::random_theta(rng0, 1.0);
    const auto probs = policy_forward(theta, some_state()).probs;
    std::mt19937_64 a(9), b(9);
    for (int i = 0; i < 1000; ++i) CHECK(sample_action(probs, a).action == sample_action(probs, b).action);
}

TEST_CASE("act_greedy") {
    CHECK(act_greedy(PolicyParameters::zeros(), some_state()) == 0);
    auto p = PolicyParameters::zeros();
    p.theta[layout::kBp + 17] = 5.0;
    CHECK(act_greedy(p, some_state()) == 17);
    // Exact tie between two logits: lowest index wins.
    p.theta[layout::kBp + 4] = 5.0;
    CHECK(act_greedy(p, some_state()) == 4);
}

TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 rng(77);
    PpoHyperparams hyper;
    for (int trial = 0; trial < 3; ++trial) {
        const auto theta = checks::random_theta(rng);
        const auto batch = checks::random_batch(theta, rng);
        const auto res = checks::finite_difference_check(theta, batch, hyper);
        INFO("worst parameter " << res.worst_index);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("zero advantages remove the policy-gradient term") {
    std::mt19937_64 rng(5);
    const auto theta = checks::random_theta(rng);
    auto batch = checks::random_batch(theta, rng);
    for (auto& s : batch) s.value_estimate = s.reward;
    PpoHyperparams hyper;
    hyper.value_coef = 0;
    hyper.entropy_coef = 0;
    std::vector<double> grad;
    const auto loss = ppo_loss(theta, batch, hyper, &grad);
    CHECK(loss.policy == 0.0);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("clip epsilon does not matter at ratio one") {
    std::mt19937_64 rng(6);
    const auto theta = checks::random_theta(rng);
    auto batch = checks::random_batch(theta, rng);
    for (auto& s : batch) s.log_prob = policy_forward(theta, s.state).log_probs[s.action];
    PpoHyperparams clipped;
    PpoHyperparams unclipped;
    unclipped.clip_epsilon = 0.0;
    std::vector<double> g1, g2;
    ppo_loss(theta, batch, clipped, &g1);
    ppo_loss(theta, batch, unclipped, &g2);
    CHECK(g1 == g2);

    // And the direction is the plain policy gradient -mean(A * dlogpi).
    PpoHyperparams pg = unclipped;
    pg.value_coef = 0;
    pg.entropy_coef = 0;
    std::vector<double> g3;
    ppo_loss(theta, batch, pg, &g3);
    const double h = 1e-6;
    auto objective = [&](const std::vector<double>& t) {
        double acc = 0;
        for (const auto& s : batch) acc -= (s.reward - s.value_estimate) * policy_forward(t, s.state).log_probs[s.action];
        return acc / static_cast<double>(batch.size());
    };
    auto probe = theta;
    for (std::size_t i : {layout::kW1 + 5, layout::kW2 + 100, layout::kWp + 3, layout::kBp + 1}) {
        probe[i] = theta[i] + h;
        const double up = objective(probe);
        probe[i] = theta[i] - h;
        const double down = objective(probe);
        probe[i] = theta[i];
        CHECK(g3[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("per-sample surrogate respects the clipping bound") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2, 2);
    const double eps = 0.2;
    for (int i = 0; i < 10000; ++i) {
        const double rho = std::exp(u(rng));
        const double adv = u(rng);
        EpisodeSample s;
        s.action = 0;
        s.reward = adv;
        s.value_estimate = 0;
        const auto theta = std::vector<double>(layout::kCount, 0.0);
        s.log_prob = -std::log(26.0) - std::log(rho);
        PpoHyperparams h;
        h.value_coef = 0;
        h.entropy_coef = 0;
        const double objective = -ppo_loss(theta, std::vector<EpisodeSample>{s}, h, nullptr).policy;
        if (adv > 0) CHECK(objective <= std::max(rho * adv, (1 + eps) * adv) + 1e-12);
        if (adv < 0) CHECK(objective <= std::min(rho * adv, (1 - eps) * adv) + 1e-12);
    }
}

TEST_CASE("ppo_update moves towards rewarded actions") {
    auto p = PolicyParameters::initialize(1);
    const auto state = some_state();
    std::vector<EpisodeSample> batch;
    const auto out = policy_forward(p, state);
    for (std::size_t a = 0; a < kActionCount; ++a) {
        batch.push_back({state, a, out.log_probs[a], a == 11 ? 1.0 : -0.5, out.value});
    }
    std::mt19937_64 rng(1);
    PpoHyperparams hyper;
    hyper.learning_rate = 1e-2;
    for (int i = 0; i < 20; ++i) ppo_update(p, batch, hyper, rng);
    CHECK(act_greedy(p, state) == 11);
    CHECK(p.adam.step == 20 * 4);
}

TEST_CASE("ppo_update rejects empty batches and non-finite gradients") {
    auto p = PolicyParameters::initialize(1);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(ppo_update(p, std::vector<EpisodeSample>{}, PpoHyperparams{}, rng), std::invalid_argument);

    EpisodeSample s;
    s.state = some_state();
    s.reward = std::numeric_limits<double>::infinity();
    const auto before = p;
    CHECK_THROWS_AS(ppo_update(p, std::vector<EpisodeSample>{s}, PpoHyperparams{}, rng), std::runtime_error);
    CHECK(p == before);
}

TEST_CASE("round-robin schedule") {
    CHECK(schedule_entry(0, 24, 3).model == 0);
    CHECK(schedule_entry(0, 24, 3).workload == 0);
    CHECK(schedule_entry(1, 24, 3).workload == 1);
    CHECK(schedule_entry(3, 24, 3).model == 1);
    for (std::uint64_t e = 0; e < 72; ++e) {
        const auto a = schedule_entry(e, 24, 3);
        const auto b = schedule_entry(e + 72, 24, 3);
        CHECK(a.model == b.model);
        CHECK(a.workload == b.workload);
    }
    // Every pair appears once per cycle.
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::uint64_t e = 0; e < 72; ++e) seen.insert({schedule_entry(e, 24, 3).model, schedule_entry(e, 24, 3).workload});
    CHECK(seen.size() == 72);
}

TEST_CASE("training with zero episodes returns the initial parameters") {
    SmallWorld w;
    Environment env(w.table, w.calibration, w.store);
    TrainOptions opt;
    opt.episodes = 0;
    opt.seed = 4;
    const auto res = train(env, w.models, kAllWorkloads, opt);
    CHECK(res.params == PolicyParameters::initialize(4));
    CHECK(res.log.empty());
    CHECK(w.store.global().count == 0);
}

TEST_CASE("training is deterministic and logs every update") {
    auto run = [](std::uint64_t seed) {
        SmallWorld w;
        Environment env(w.table, w.calibration, w.store);
        TrainOptions opt;
        opt.episodes = 600;
        opt.seed = seed;
        int calls = 0;
        opt.on_update = [&](const TrainingLogEntry&) { ++calls; };
        auto res = train(env, w.models, kAllWorkloads, opt);
        CHECK(calls == 2);
        return std::make_pair(res, w.store);
    };
    const auto [a, sa] = run(10);
    const auto [b, sb] = run(10);
    CHECK(a.params == b.params);
    CHECK(sa == sb);
    REQUIRE(a.log.size() == 2);
    CHECK(a.log[1].episodes == 512);
    CHECK(a.log[0].mean_reward == b.log[0].mean_reward);
    for (const auto& e : a.log) {
        CHECK(e.mean_reward >= -1.0);
        CHECK(e.mean_reward <= 1.0);
        CHECK(e.constraint_rate >= 0.0);
        CHECK(e.constraint_rate <= 1.0);
    }
    // All 600 episodes feed the store, including the trailing partial batch.
    CHECK(sa.global().count > 512 * 0.5);
    const auto [c, sc] = run(11);
    CHECK_FALSE(a.params == c.params);
}

TEST_CASE("checkpoint round trip and version check") {
    SmallWorld w;
    Environment env(w.table, w.calibration, w.store);
    TrainOptions opt;
    opt.episodes = 300;
    const auto res = train(env, w.models, kAllWorkloads, opt);
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = dir / "dpuconfig_agent_ckpt.json";
    save_checkpoint(path, {res.params, w.store, nlohmann::json{{"seed", 1}}});
    const auto back = load_checkpoint(path);
    CHECK(back.params == res.params);
    CHECK(back.store == w.store);
    CHECK(back.config["seed"] == 1);

    std::ifstream in(path);
    auto j = nlohmann::json::parse(in);
    in.close();
    j["version"] = kCheckpointVersion + 1;
    std::ofstream(path) << j.dump();
    try {
        load_checkpoint(path);
        FAIL("expected version mismatch");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(dir / "does_not_exist.json"), std::runtime_error);
}

TEST_CASE("hyperparameter validation") {
    PpoHyperparams h;
    h.learning_rate = 0;
    h.batch_size = 0;
    try {
        validate_hyperparams(h);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("learning_rate") != std::string::npos);
        CHECK(msg.find("batch_size") != std::string::npos);
    }
}
