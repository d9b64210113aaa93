#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csanmt/ctl.hpp"
#include "csanmt/optim.hpp"

using namespace csanmt;

namespace {

Tensor mat(std::vector<int64_t> shape, std::vector<double> v) {
    Tensor t(std::move(shape));
    REQUIRE(t.numel() == static_cast<int64_t>(v.size()));
    t.data = std::move(v);
    return t;
}

Tensor randn(std::vector<int64_t> shape, uint64_t seed, double sd = 1.0) {
    Tensor t(std::move(shape));
    Rng r(seed);
    r.fill_normal(t, sd);
    return t;
}

double eval_ctl(const Tensor& rx, const Tensor& ry, const CtlConfig& cfg, uint64_t seed,
                CtlDiag* diag = nullptr) {
    Tape tape;
    Rng rng(seed);
    NodeId a = tape.constant(rx);
    NodeId b = tape.constant(ry);
    return tape.value(ctl_loss(tape, a, b, cfg, rng, diag)).data[0];
}

} // namespace

TEST_CASE("interpolate_negative: distant candidates are pulled onto the tangent band") {
    Rng rng(1);
    Tensor ri = Tensor::from({0.0, 0.0});
    Tensor rj = Tensor::from({3.0, 0.0});
    const double d = 1.0;
    for (int trial = 0; trial < 500; ++trial) {
        NegativeSample s = interpolate_negative(ri, rj, d, 0.0, rng);
        CHECK(s.interpolated);
        CHECK(s.lambda > 1.0 / 3.0);
        CHECK(s.lambda <= 1.0);
        // The sample sits on the segment: (3 lambda, 0).
        CHECK(s.vec[0] == doctest::Approx(3.0 * s.lambda).epsilon(1e-12));
        CHECK(s.vec[1] == 0.0);
        // Never closer to the anchor than the pair distance.
        CHECK(l2_distance(s.vec, ri) > d - 1e-9);
    }
}

TEST_CASE("interpolate_negative: close candidates pass through unchanged") {
    Rng rng(2);
    Tensor ri = Tensor::from({0.0, 0.0});
    Tensor close = Tensor::from({0.5, 0.0});
    NegativeSample s = interpolate_negative(ri, close, 1.0, 0.0, rng);
    CHECK(!s.interpolated);
    CHECK(s.lambda == 1.0);
    CHECK(l2_distance(s.vec, close) == 0.0);

    // Equal distance (d' == d) also keeps the candidate.
    Tensor at = Tensor::from({1.0, 0.0});
    NegativeSample s2 = interpolate_negative(ri, at, 1.0, 0.0, rng);
    CHECK(!s2.interpolated);
    CHECK(l2_distance(s2.vec, at) == 0.0);

    // Identical vectors: nothing to interpolate towards.
    NegativeSample s3 = interpolate_negative(ri, ri, 1.0, 0.0, rng);
    CHECK(!s3.interpolated);
    CHECK(l2_distance(s3.vec, ri) == 0.0);
}

TEST_CASE("interpolate_negative: the floor tightens the lambda band") {
    Rng rng(3);
    Tensor ri = Tensor::from({0.0, 0.0});
    Tensor rj = Tensor::from({3.0, 0.0});
    for (int trial = 0; trial < 300; ++trial) {
        NegativeSample s = interpolate_negative(ri, rj, 1.0, 0.9, rng);
        CHECK(s.lambda > 0.9);
        CHECK(s.lambda <= 1.0);
    }
}

TEST_CASE("interpolate_negative: randomized margin sweep") {
    Rng rng(4);
    const int dim = 4;
    for (int trial = 0; trial < 200; ++trial) {
        Tensor ri = randn({dim}, 100 + uint64_t(trial));
        Tensor rj = randn({dim}, 900 + uint64_t(trial));
        double dprime = l2_distance(ri, rj);
        double d = dprime * rng.uniform(0.1, 0.99); // force the interpolating branch
        NegativeSample s = interpolate_negative(ri, rj, d, 0.0, rng);
        CHECK(s.interpolated);
        CHECK(l2_distance(s.vec, ri) > d - 1e-9);
    }
}

TEST_CASE("ctl: hand-computed two-pair loss at lambda one") {
    // rx = ry = identity rows: positives at cos 1, all negatives at cos 0.
    // Per pair: lse(1, 0, 0) - 1 = log(e + 2) - 1.
    Tensor rx = mat({2, 2}, {1, 0, 0, 1});
    Tensor lambda1({2, 2}, 1.0);
    CtlConfig cfg;
    CtlDiag diag;

    Tape tape;
    Rng rng(5);
    NodeId a = tape.constant(rx);
    NodeId b = tape.constant(rx);
    NodeId loss = ctl_loss(tape, a, b, cfg, rng, &diag, &lambda1, &lambda1);
    const double expect = std::log(std::exp(1.0) + 2.0) - 1.0;
    CHECK(tape.value(loss).data[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(diag.mean_pos_sim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(diag.mean_neg_sim == doctest::Approx(0.0).epsilon(1e-9));

    // Temperature sharpening: same geometry at tau = 1/2.
    CtlConfig half = cfg;
    half.tau = 0.5;
    Tape tape2;
    Rng rng2(5);
    NodeId l2 = ctl_loss(tape2, tape2.constant(rx), tape2.constant(rx), half, rng2, nullptr,
                         &lambda1, &lambda1);
    const double expect2 = std::log(std::exp(2.0) + 2.0) - 2.0;
    CHECK(tape2.value(l2).data[0] == doctest::Approx(expect2).epsilon(1e-12));
}

TEST_CASE("ctl: single pair has no negatives and zero loss") {
    Tensor rx = mat({1, 3}, {1, 2, 3});
    Tensor ry = mat({1, 3}, {-1, 0.5, 2});
    CtlConfig cfg;
    CHECK(eval_ctl(rx, ry, cfg, 7) == 0.0);
}

TEST_CASE("ctl: loss is never negative") {
    CtlConfig cfg;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Tensor rx = randn({4, 6}, 2000 + seed);
        Tensor ry = randn({4, 6}, 3000 + seed);
        CHECK(eval_ctl(rx, ry, cfg, seed) >= 0.0);
    }
}

TEST_CASE("ctl: similarity geometry is scale invariant") {
    CtlConfig cfg;
    Tensor rx = randn({5, 8}, 41);
    Tensor ry = randn({5, 8}, 42);
    // Scaling all vectors by 7 scales d and d' together, so the lambda
    // stream and every cosine are unchanged.
    double base = eval_ctl(rx, ry, cfg, 11);
    double scaled = eval_ctl(scale(rx, 7.0), scale(ry, 7.0), cfg, 11);
    CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("ctl: deterministic in the generator seed") {
    CtlConfig cfg;
    Tensor rx = randn({4, 5}, 51);
    Tensor ry = randn({4, 5}, 52);
    CHECK(eval_ctl(rx, ry, cfg, 9) == eval_ctl(rx, ry, cfg, 9));
    CHECK(eval_ctl(rx, ry, cfg, 9) != eval_ctl(rx, ry, cfg, 10));
}

TEST_CASE("ctl: frozen-lambda gradients match central differences") {
    CtlConfig cfg;
    cfg.tau = 0.7;
    const int B = 3, H = 4;
    Tensor rx0 = randn({B, H}, 61);
    Tensor ry0 = randn({B, H}, 62);
    Tensor lx({B, B}), ly({B, B});
    Rng lr(63);
    lr.fill_uniform(lx, 0.4, 1.0);
    lr.fill_uniform(ly, 0.4, 1.0);

    auto wrt_x = [&](const Tensor& theta, Tensor* grad_out) {
        Tape tape;
        Rng rng(0);
        NodeId a = tape.leaf(theta, true);
        NodeId b = tape.constant(ry0);
        NodeId loss = ctl_loss(tape, a, b, cfg, rng, nullptr, &lx, &ly);
        if (grad_out) {
            tape.backward(loss);
            *grad_out = tape.grad(a);
        }
        return tape.value(loss).data[0];
    };
    CHECK(grad_check(wrt_x, rx0) < 1e-4);

    auto wrt_y = [&](const Tensor& theta, Tensor* grad_out) {
        Tape tape;
        Rng rng(0);
        NodeId a = tape.constant(rx0);
        NodeId b = tape.leaf(theta, true);
        NodeId loss = ctl_loss(tape, a, b, cfg, rng, nullptr, &lx, &ly);
        if (grad_out) {
            tape.backward(loss);
            *grad_out = tape.grad(b);
        }
        return tape.value(loss).data[0];
    };
    CHECK(grad_check(wrt_y, ry0) < 1e-4);
}

TEST_CASE("ctl: degenerate inputs and configs are rejected") {
    CtlConfig cfg;
    Tensor rx = mat({2, 2}, {1, 0, 0, 0}); // second row is the zero vector
    Tensor ry = mat({2, 2}, {1, 0, 0, 1});
    Tape tape;
    Rng rng(1);
    NodeId a = tape.constant(rx);
    NodeId b = tape.constant(ry);
    CHECK_THROWS_AS(ctl_loss(tape, a, b, cfg, rng), NumericError);

    CtlConfig bad;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.tau = 1.0;
    bad.lambda_floor = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("cosine loss: aligned, orthogonal, and mixed batches") {
    auto run = [](const Tensor& rx, const Tensor& ry) {
        Tape tape;
        return tape.value(cosine_loss(tape, tape.constant(rx), tape.constant(ry))).data[0];
    };
    CHECK(run(mat({1, 2}, {2, 0}), mat({1, 2}, {5, 0})) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(run(mat({1, 2}, {1, 0}), mat({1, 2}, {0, 3})) == doctest::Approx(0.0).epsilon(1e-9));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(run(mat({1, 2}, {1, 0}), mat({1, 2}, {1, 1})) ==
          doctest::Approx(-inv_sqrt2).epsilon(1e-9));
    // Mean over the batch.
    CHECK(run(mat({2, 2}, {1, 0, 1, 0}), mat({2, 2}, {1, 0, 0, 3})) ==
          doctest::Approx(-0.5).epsilon(1e-9));

    Tensor rx = randn({3, 4}, 71);
    Tensor ry = randn({3, 4}, 72);
    auto wrt = [&](const Tensor& theta, Tensor* grad_out) {
        Tape tape;
        NodeId a = tape.leaf(theta, true);
        NodeId loss = cosine_loss(tape, a, tape.constant(ry));
        if (grad_out) {
            tape.backward(loss);
            *grad_out = tape.grad(a);
        }
        return tape.value(loss).data[0];
    };
    CHECK(grad_check(wrt, rx) < 1e-4);
}
