#include "popo/policy.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "popo/errors.hpp"
#include "popo/rng.hpp"

namespace {

popo::TaskInstance toy_task(int k, std::vector<int> correct, int prompt_id = 0) {
    popo::TaskInstance t;
    t.prompt_id = prompt_id;
    t.response_count = k;
    t.correct_set = std::move(correct);
    return t;
}

// Reference softmax in extended precision, no max shift. Disagreement with
// forward() beyond rounding noise means the shift is implemented wrong.
std::vector<double> softmax_longdouble(const std::vector<double>& z) {
    long double sum = 0.0L;
    for (double v : z) sum += expl(static_cast<long double>(v));
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        p[i] = static_cast<double>(expl(static_cast<long double>(z[i])) / sum);
    return p;
}

} // namespace

TEST(Policy, UniformRowGivesUniformProbsAndMaxEntropy) {
    auto params = popo::make_tabular_policy(3, 4);
    const auto out = popo::forward(params, toy_task(4, {0}, 1));
    for (double p : out.probs) EXPECT_DOUBLE_EQ(p, 0.25);
    EXPECT_NEAR(out.entropy, std::log(4.0), 1e-15);
    EXPECT_EQ(out.representation, out.logits);
}

TEST(Policy, MaxShiftSurvivesHugeLogits) {
    auto params = popo::make_tabular_policy(1, 2);
    params.values = {1000.0, 0.0};
    const auto out = popo::forward(params, toy_task(2, {0}));
    EXPECT_NEAR(out.probs[0], 1.0, 1e-12);
    EXPECT_GE(out.probs[1], 0.0);
    EXPECT_TRUE(std::isfinite(out.entropy));
    EXPECT_TRUE(std::isfinite(out.logprobs[1]));
    EXPECT_NEAR(out.logprobs[1], -1000.0, 1e-9);
}

TEST(Policy, SoftmaxMatchesExtendedPrecisionOracle) {
    popo::RngStream rng(5, popo::StreamPurpose::check);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(15));
        auto params = popo::make_tabular_policy(1, k);
        for (auto& v : params.values) v = 3.0 * rng.normal();
        const auto out = popo::forward(params, toy_task(k, {0}));
        const auto oracle = softmax_longdouble(params.values);
        double sum = 0.0;
        for (int y = 0; y < k; ++y) {
            const auto i = static_cast<std::size_t>(y);
            EXPECT_NEAR(out.probs[i], oracle[i], 1e-14 * std::max(1.0, oracle[i]));
            EXPECT_NEAR(std::exp(out.logprobs[i]), out.probs[i], 1e-15);
            sum += out.probs[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_GE(out.entropy, 0.0);
        EXPECT_LE(out.entropy, std::log(static_cast<double>(k)) + 1e-12);
    }
}

TEST(Policy, EntropyIsMaxIffLogitsConstant) {
    auto flat = popo::make_tabular_policy(1, 6, 2.5);
    EXPECT_NEAR(popo::forward(flat, toy_task(6, {0})).entropy, std::log(6.0), 1e-12);
    auto tilted = popo::make_tabular_policy(1, 6);
    tilted.values[0] = 0.1;
    EXPECT_LT(popo::forward(tilted, toy_task(6, {0})).entropy, std::log(6.0) - 1e-5);
}

TEST(Policy, ForwardChecksShapes) {
    auto params = popo::make_tabular_policy(2, 4);
    EXPECT_THROW(popo::forward(params, toy_task(5, {0})), popo::ShapeError);
    EXPECT_THROW(popo::forward(params, toy_task(4, {0}, 2)), popo::ShapeError);
    params.values[0] = std::nan("");
    EXPECT_THROW(popo::forward(params, toy_task(4, {0})), popo::NumericError);
}

TEST(Policy, DegenerateSamplingPicksTheMode) {
    auto params = popo::make_tabular_policy(1, 4);
    params.values = {-100.0, 50.0, -100.0, -100.0};
    popo::RngStream rng(1, popo::StreamPurpose::rollout);
    for (int s : popo::sample_group(params, toy_task(4, {1}), 64, rng))
        EXPECT_EQ(s, 1);
}

TEST(Policy, SamplingIsDeterministicPerStream) {
    auto params = popo::make_tabular_policy(1, 5);
    params.values = {0.3, -0.2, 0.9, 0.0, -1.1};
    popo::RngStream a(2, popo::StreamPurpose::rollout, 3, 0);
    popo::RngStream b(2, popo::StreamPurpose::rollout, 3, 0);
    const auto task = toy_task(5, {0});
    EXPECT_EQ(popo::sample_group(params, task, 32, a),
              popo::sample_group(params, task, 32, b));
}

TEST(Policy, SamplingFrequenciesTrackProbs) {
    auto params = popo::make_tabular_policy(1, 3);
    params.values = {std::log(0.5), std::log(0.3), std::log(0.2)};
    const auto task = toy_task(3, {0});
    popo::RngStream rng(3, popo::StreamPurpose::rollout);
    std::map<int, int> counts;
    const int n = 1000000;
    for (int s : popo::sample_group(params, task, n, rng)) ++counts[s];
    EXPECT_NEAR(counts[0] / double(n), 0.5, 0.002);
    EXPECT_NEAR(counts[1] / double(n), 0.3, 0.002);
    EXPECT_NEAR(counts[2] / double(n), 0.2, 0.002);
}

TEST(Policy, TabularBackwardIsIdentityIntoTheRow) {
    auto params = popo::make_tabular_policy(3, 4);
    const auto out = popo::forward(params, toy_task(4, {0}, 1));
    auto acc = popo::make_grad_buffer(params);
    popo::backward(params, out, {1.0, -2.0, 0.5, 0.0}, {}, acc);
    // Row 1 gets the gradient, rows 0 and 2 stay zero.
    const std::vector<double> expect = {0, 0, 0, 0, 1.0, -2.0, 0.5, 0.0, 0, 0, 0, 0};
    EXPECT_EQ(acc.values, expect);
    // Accumulation adds on a second call.
    popo::backward(params, out, {1.0, 0.0, 0.0, 0.0}, {}, acc);
    EXPECT_DOUBLE_EQ(acc.values[4], 2.0);
    // Tabular repr tap lands in the same row.
    popo::backward(params, out, {0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 3.0}, acc);
    EXPECT_DOUBLE_EQ(acc.values[7], 3.0);
}

TEST(Policy, ZeroGradientStepIsNoOp) {
    auto params = popo::make_tabular_policy(2, 3, 0.7);
    auto grads = popo::make_grad_buffer(params);
    double norm = -1.0;
    const auto next = popo::sgd_step(params, grads, 0.1, 1.0, &norm);
    EXPECT_EQ(next.values, params.values);
    EXPECT_EQ(norm, 0.0);
}

TEST(Policy, ClipScalesUpdateToExactlyClipTimesLr) {
    auto params = popo::make_tabular_policy(1, 4);
    auto grads = popo::make_grad_buffer(params);
    grads.values = {6.0, 0.0, 0.0, 8.0}; // norm 10
    double norm = 0.0;
    const auto next = popo::sgd_step(params, grads, 0.05, 1.0, &norm);
    EXPECT_DOUBLE_EQ(norm, 1.0);
    double applied = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double d = next.values[i] - params.values[i];
        applied += d * d;
    }
    EXPECT_NEAR(std::sqrt(applied), 0.05 * 1.0, 1e-15);
}

TEST(Policy, HandComputedStepOnThreeLogits) {
    auto params = popo::make_tabular_policy(1, 3);
    params.values = {0.1, 0.3, 0.4};
    auto grads = popo::make_grad_buffer(params);
    grads.values = {0.3, 0.9, 1.2}; // norm sqrt(2.34) ~ 1.53 > clip 1
    const double norm = std::sqrt(2.34);
    const double lr = 0.1;
    const auto next = popo::sgd_step(params, grads, lr, 1.0);
    EXPECT_NEAR(next.values[0], 0.1 - lr * 0.3 / norm, 1e-15);
    EXPECT_NEAR(next.values[1], 0.3 - lr * 0.9 / norm, 1e-15);
    EXPECT_NEAR(next.values[2], 0.4 - lr * 1.2 / norm, 1e-15);
    // Input untouched.
    EXPECT_DOUBLE_EQ(params.values[0], 0.1);
}

TEST(Policy, SgdStepRejectsBadArguments) {
    auto params = popo::make_tabular_policy(1, 3);
    auto grads = popo::make_grad_buffer(params);
    EXPECT_THROW(popo::sgd_step(params, grads, 0.0, 1.0), popo::ConfigError);
    EXPECT_THROW(popo::sgd_step(params, grads, 0.1, 0.0), popo::ConfigError);
    grads.values[0] = std::nan("");
    EXPECT_THROW(popo::sgd_step(params, grads, 0.1, 1.0), popo::NumericError);
}

TEST(Policy, NetworkForwardProducesRepresentationAndFiniteLogits) {
    const std::vector<int> dims = {6, 8, 5, 4}; // feat, hidden, d_repr, K
    auto params = popo::make_network_policy(dims, 11);
    popo::TaskInstance task = toy_task(4, {0});
    task.features = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
    const auto out = popo::forward(params, task);
    EXPECT_EQ(out.logits.size(), 4u);
    EXPECT_EQ(out.representation.size(), 5u);
    EXPECT_EQ(params.repr_dim(), 5);
    for (double r : out.representation) {
        EXPECT_GE(r, -1.0); // post-tanh
        EXPECT_LE(r, 1.0);
    }
    // Same seed, same params.
    const auto again = popo::make_network_policy(dims, 11);
    EXPECT_EQ(again.values, params.values);
    const auto other = popo::make_network_policy(dims, 12);
    EXPECT_NE(other.values, params.values);
}

TEST(Policy, NetworkBackwardMatchesFiniteDifferences) {
    const std::vector<int> dims = {3, 6, 4, 3};
    auto params = popo::make_network_policy(dims, 21);
    popo::TaskInstance task = toy_task(3, {0});
    task.features = {0.7, -0.3, 1.2};

    // Loss = fixed linear functional of logits and representation.
    const std::vector<double> gl = {0.4, -1.0, 0.6};
    const std::vector<double> gr = {0.2, -0.5, 0.1, 0.9};
    auto loss = [&](const popo::PolicyParams& p) {
        const auto out = popo::forward(p, task);
        double v = 0.0;
        for (std::size_t i = 0; i < gl.size(); ++i) v += gl[i] * out.logits[i];
        for (std::size_t i = 0; i < gr.size(); ++i) v += gr[i] * out.representation[i];
        return v;
    };

    const auto out = popo::forward(params, task);
    auto acc = popo::make_grad_buffer(params);
    popo::backward(params, out, gl, gr, acc);

    const double h = 1e-6;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        auto plus = params, minus = params;
        plus.values[i] += h;
        minus.values[i] -= h;
        const double fd = (loss(plus) - loss(minus)) / (2.0 * h);
        ASSERT_NEAR(acc.values[i], fd, 1e-7 + 1e-6 * std::abs(fd)) << "param " << i;
    }
}

TEST(Policy, CheckpointRoundTripIsExact) {
    auto tab = popo::make_tabular_policy(4, 6);
    popo::RngStream rng(31, popo::StreamPurpose::check);
    for (auto& v : tab.values) v = rng.normal();
    const std::string path = testing::TempDir() + "policy_tab.bin";
    popo::save_policy(tab, path);
    const auto back = popo::load_policy(path);
    EXPECT_EQ(back.mode, tab.mode);
    EXPECT_EQ(back.dims, tab.dims);
    EXPECT_EQ(back.values, tab.values);
    std::remove(path.c_str());

    auto net = popo::make_network_policy({3, 5, 4, 2}, 7);
    const std::string npath = testing::TempDir() + "policy_net.bin";
    popo::save_policy(net, npath);
    const auto nback = popo::load_policy(npath);
    EXPECT_EQ(nback.mode, popo::PolicyMode::network);
    EXPECT_EQ(nback.dims, net.dims);
    EXPECT_EQ(nback.values, net.values);
    std::remove(npath.c_str());
}

TEST(Policy, CheckpointRejectsGarbage) {
    const std::string path = testing::TempDir() + "policy_bad.bin";
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        ASSERT_NE(f, nullptr);
        std::fputs("MAGIC-WRONG-AND-SHORT", f);
        std::fclose(f);
    }
    EXPECT_THROW(popo::load_policy(path), popo::IoError);
    std::remove(path.c_str());
    EXPECT_THROW(popo::load_policy(path), popo::IoError);
}
