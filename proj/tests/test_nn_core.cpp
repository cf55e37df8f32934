#include <cmath>

#include "canids/error.hpp"
#include "canids/nn/adam.hpp"
#include "canids/nn/checkpoint.hpp"
#include "canids/nn/ops.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"

using namespace canids;
using namespace canids::nn;
using canids::testing::random_matrix;

TEST_CASE("a node used twice accumulates both gradient paths") {
    Tape t;
    auto x = t.leaf(Matrix(1, 1, {3.0}));
    auto y = mul(x, x);  // x^2
    t.backward(add(y, x));
    CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("constants receive no gradient and leaves without a path get none") {
    Tape t;
    auto c = t.constant(Matrix(1, 1, {2.0}));
    auto x = t.leaf(Matrix(1, 1, {5.0}));
    auto unused = t.leaf(Matrix(1, 1, {1.0}));
    t.backward(mul(c, x));
    CHECK_FALSE(c.requires_grad());
    CHECK(x.grad()[0] == 2.0);
    CHECK(unused.grad().empty());
}

TEST_CASE("backward needs a scalar loss") {
    Tape t;
    auto x = t.leaf(Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(x), DimensionError);
}

TEST_CASE("bound parameters accumulate into the gradient buffer") {
    ParamSet ps;
    ps.add("w", Matrix(1, 2, {1.0, -2.0}));
    GradBuffer grads(ps);
    for (int pass = 0; pass < 2; ++pass) {
        Tape t;
        auto b = t.bind(ps, &grads);
        t.backward(sum(square(b[0])));
    }
    CHECK(grads[0][0] == doctest::Approx(4.0));
    CHECK(grads[0][1] == doctest::Approx(-8.0));
}

TEST_CASE("Adam follows the bias-corrected update") {
    ParamSet ps;
    ps.add("w", Matrix(1, 2, {0.5, -1.0}));
    AdamOptions o;
    o.lr = 0.1;
    Adam adam(ps, o);
    double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {0.5, -1.0};
    Rng rng(9);
    for (int step = 1; step <= 5; ++step) {
        GradBuffer g(ps);
        g[0] = random_matrix(1, 2, rng);
        adam.step(ps, g);
        for (int i = 0; i < 2; ++i) {
            m[i] = o.beta1 * m[i] + (1 - o.beta1) * g[0][i];
            v[i] = o.beta2 * v[i] + (1 - o.beta2) * g[0][i] * g[0][i];
            const double mh = m[i] / (1 - std::pow(o.beta1, step)), vh = v[i] / (1 - std::pow(o.beta2, step));
            w[i] -= o.lr * mh / (std::sqrt(vh) + o.eps);
            CHECK(ps[0].value[i] == doctest::Approx(w[i]).epsilon(1e-13));
        }
    }
    CHECK(adam.steps() == 5);
}

TEST_CASE("checkpoints reload bit-exactly and reject mismatches") {
    Rng rng(2);
    Checkpoint ck;
    ck.kind = "gat";
    ck.config = {{"layers", "3"}, {"role", "student"}};
    ck.params.add("a", random_matrix(3, 4, rng, -1e6, 1e6));
    ck.params.add("b", Matrix(1, 2, {1e-300, -0.1}));
    const auto back = deserialize_checkpoint(serialize_checkpoint(ck));
    CHECK(back.kind == "gat");
    CHECK(back.config == ck.config);
    CHECK(back.params.checksum() == ck.params.checksum());

    ParamSet wrong;
    wrong.add("a", Matrix(4, 3));
    wrong.add("b", Matrix(1, 2));
    CHECK_THROWS(assign_params(wrong, ck.params));
    CHECK_THROWS_AS(deserialize_checkpoint("canids-checkpoint 1\nkind x\nparam a 1 2\n1\nend\n"), ParseError);
}

TEST_CASE("ParamSet rejects duplicate names and counts scalars") {
    ParamSet ps;
    ps.add("x", Matrix(2, 3));
    CHECK_THROWS(ps.add("x", Matrix(1, 1)));
    ps.add("y", Matrix(4, 1));
    CHECK(ps.scalar_count() == 10);
    CHECK(ps.find("y").value() == 1);
}

TEST_CASE("Rng streams are reproducible and derived seeds differ") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(Rng::derive(1, 1) != Rng::derive(1, 2));
    CHECK(Rng::derive(1, 1) != Rng::derive(2, 1));
    Rng c(5);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = c.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}
