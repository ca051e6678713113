#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "kepler/tape.hpp"

using namespace kepler;
using test::max_grad_err;
using test::random_tensor;

TEST_CASE("matmul forward shape and values") {
    Tape tape;
    const auto a = tape.input(Tensor::from_rows({{1, 2, 3}, {4, 5, 6}}));
    const auto b = tape.input(Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}}));
    const auto c = tape.matmul(a, b);
    CHECK(tape.value(c).rows() == 2);
    CHECK(tape.value(c).cols() == 2);
    CHECK(tape.value(c).at(0, 0) == 4.0);
    CHECK(tape.value(c).at(1, 1) == 11.0);
    CHECK_THROWS_WITH_AS(tape.matmul(a, a), doctest::Contains("matmul"),
                         std::invalid_argument);
}

TEST_CASE("softmax of zeros is uniform and rows sum to one") {
    Tape tape;
    const auto s = tape.softmax_rows(tape.input(Tensor::row({0.0, 0.0})));
    CHECK(tape.value(s)[0] == 0.5);
    CHECK(tape.value(s)[1] == 0.5);

    Rng rng(2);
    const auto r = tape.softmax_rows(tape.input(random_tensor(8, 13, rng, -30, 30)));
    for (int i = 0; i < 8; ++i) {
        double sum = 0;
        for (int j = 0; j < 13; ++j) sum += tape.value(r).at(i, j);
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("layer norm of a constant row is zero") {
    Tape tape;
    const auto y = tape.layer_norm(tape.input(Tensor::row({3.5, 3.5, 3.5, 3.5})));
    for (int j = 0; j < 4; ++j) CHECK(tape.value(y)[j] == 0.0);
}

TEST_CASE("backward of sum is all ones") {
    ParameterSet ps;
    ps.add("p", Tensor::row({1.0, -2.0, 0.5}));
    Tape tape(&ps);
    tape.backward(tape.sum_all(tape.param("p")));
    for (int j = 0; j < 3; ++j) CHECK(ps.at("p").grad[j] == 1.0);
}

TEST_CASE("L1 norm gradient is the sign, zero at zero") {
    ParameterSet ps;
    ps.add("p", Tensor::row({2.0, -3.0}));
    {
        Tape tape(&ps);
        tape.backward(tape.sum_all(tape.row_pnorm(tape.param("p"), 1)));
        CHECK(ps.at("p").grad[0] == 1.0);
        CHECK(ps.at("p").grad[1] == -1.0);
    }
    ParameterSet zs;
    zs.add("z", Tensor::row({0.0, 4.0}));
    Tape tape(&zs);
    tape.backward(tape.sum_all(tape.row_pnorm(tape.param("z"), 1)));
    CHECK(zs.at("z").grad[0] == 0.0);
    CHECK(zs.at("z").grad[1] == 1.0);
}

TEST_CASE("backward requires a scalar loss and zeroes unreachable params") {
    ParameterSet ps;
    ps.add("used", Tensor::row({1.0, 2.0}));
    ps.add("unused", Tensor::row({3.0}));
    Tape tape(&ps);
    const auto p = tape.param("used");
    CHECK_THROWS_AS(tape.backward(p), std::invalid_argument);
    tape.backward(tape.mean_all(p));
    CHECK(ps.at("unused").grad[0] == 0.0);
}

// Every primitive against central differences on random small inputs.
TEST_CASE("primitive gradients match finite differences below 1e-6") {
    Rng rng(17);
    auto check = [&](const char* name, int rows, int cols,
                     const std::function<Tape::Id(Tape&, Tape::Id)>& wrap,
                     double lo = -1.0, double hi = 1.0) {
        ParameterSet ps;
        ps.add("x", random_tensor(rows, cols, rng, lo, hi));
        const double err = max_grad_err(ps, [&](Tape& t) {
            const Tape::Id y = wrap(t, t.param("x"));
            return t.mean_all(y);
        });
        INFO(std::string(name));
        CHECK(err < 1e-6);
    };

    Rng r2(23);
    const Tensor other23 = random_tensor(2, 3, r2);
    const Tensor other13 = random_tensor(1, 3, r2);
    const Tensor other34 = random_tensor(3, 4, r2);
    const Tensor other54 = random_tensor(5, 4, r2, 0.2, 1.0);
    const Tensor weights25 = random_tensor(2, 5, r2);
    const Tensor weights26 = random_tensor(2, 6, r2);

    check("add", 2, 3, [&](Tape& t, Tape::Id x) { return t.add(x, t.input(other23)); });
    check("sub", 2, 3, [&](Tape& t, Tape::Id x) { return t.sub(t.input(other23), x); });
    check("mul", 2, 3, [&](Tape& t, Tape::Id x) { return t.mul(x, t.input(other23)); });
    check("add_row", 2, 3, [&](Tape& t, Tape::Id x) { return t.add_row(x, t.input(other13)); });
    check("mul_row", 2, 3, [&](Tape& t, Tape::Id x) { return t.mul_row(x, t.input(other13)); });
    check("affine", 2, 3, [&](Tape& t, Tape::Id x) { return t.affine(x, -1.7, 0.3); });
    check("matmul", 2, 3, [&](Tape& t, Tape::Id x) { return t.matmul(x, t.input(other34)); });
    check("matmul_nt", 2, 4,
          [&](Tape& t, Tape::Id x) { return t.matmul_nt(x, t.input(other54)); });
    check("gather_rows", 5, 3,
          [&](Tape& t, Tape::Id x) { return t.gather_rows(x, {4, 0, 0, 2}); });
    check("row_sum", 3, 4, [&](Tape& t, Tape::Id x) { return t.row_sum(x); });
    // keep L1 inputs away from the kink, L2 away from zero norm
    check("row_pnorm1", 3, 4, [&](Tape& t, Tape::Id x) { return t.row_pnorm(x, 1); }, 0.3, 1.0);
    check("row_pnorm2", 3, 4, [&](Tape& t, Tape::Id x) { return t.row_pnorm(x, 2); }, 0.3, 1.0);
    check("sigmoid", 2, 3, [&](Tape& t, Tape::Id x) { return t.sigmoid(x); }, -3, 3);
    check("log_sigmoid", 2, 3, [&](Tape& t, Tape::Id x) { return t.log_sigmoid(x); }, -3, 3);
    check("gelu", 2, 3, [&](Tape& t, Tape::Id x) { return t.gelu(x); }, -2, 2);
    check("cos", 2, 3, [&](Tape& t, Tape::Id x) { return t.cos(x); }, -3, 3);
    check("sin", 2, 3, [&](Tape& t, Tape::Id x) { return t.sin(x); }, -3, 3);
    check("softmax", 2, 5, [&](Tape& t, Tape::Id x) {
        return t.mul(t.softmax_rows(x), t.input(weights25));
    });
    check("layer_norm", 2, 6, [&](Tape& t, Tape::Id x) {
        return t.mul(t.layer_norm(x), t.input(weights26));
    });
    check("concat_rows", 2, 3, [&](Tape& t, Tape::Id x) {
        return t.concat_rows({x, t.input(other23), x});
    });
    check("concat_cols", 2, 3, [&](Tape& t, Tape::Id x) {
        return t.concat_cols({x, t.input(other23)});
    });
    check("slice_rows", 4, 3, [&](Tape& t, Tape::Id x) { return t.slice_rows(x, 1, 2); });
    check("slice_cols", 2, 5, [&](Tape& t, Tape::Id x) { return t.slice_cols(x, 1, 3); });
    check("cross_entropy", 3, 6,
          [&](Tape& t, Tape::Id x) { return t.cross_entropy(x, {1, 5, 0}); }, -2, 2);
}

TEST_CASE("dropout gradient matches finite differences with a fixed mask") {
    Rng rng(31);
    ParameterSet ps;
    ps.add("x", random_tensor(3, 4, rng));
    const double err = max_grad_err(ps, [&](Tape& t) {
        Rng mask_rng(99); // same mask on every rebuild
        return t.mean_all(t.dropout(t.param("x"), 0.4, mask_rng, true));
    });
    CHECK(err < 1e-6);

    // eval mode is the identity
    Tape tape(&ps);
    Rng mask_rng(99);
    const auto x = tape.param("x");
    CHECK(tape.dropout(x, 0.4, mask_rng, false) == x);
}

TEST_CASE("two-layer network gradient vs finite differences") {
    Rng rng(41);
    ParameterSet ps;
    ps.add("w1", random_tensor(5, 7, rng, -0.5, 0.5));
    ps.add("b1", random_tensor(1, 7, rng, -0.1, 0.1));
    ps.add("w2", random_tensor(7, 4, rng, -0.5, 0.5));
    ps.add("b2", random_tensor(1, 4, rng, -0.1, 0.1));
    const Tensor x = random_tensor(6, 5, rng);

    const double err = max_grad_err(
        ps,
        [&](Tape& t) {
            const auto h =
                t.gelu(t.add_row(t.matmul(t.input(x), t.param("w1")), t.param("b1")));
            const auto logits = t.add_row(t.matmul(h, t.param("w2")), t.param("b2"));
            return t.cross_entropy(logits, {0, 3, 1, 2, 0, 1});
        },
        1e-4, 40);
    CHECK(err < 1e-4);
}

TEST_CASE("cross entropy is nonnegative and ln W for uniform logits") {
    Tape tape;
    const auto zero_logits = tape.input(Tensor(4, 11));
    const auto ce = tape.cross_entropy(zero_logits, {3, 1, 0, 10});
    CHECK(tape.value(ce).item() == doctest::Approx(std::log(11.0)).epsilon(1e-14));

    Rng rng(5);
    const auto r = tape.cross_entropy(tape.input(random_tensor(5, 9, rng, -4, 4)),
                                      {0, 1, 2, 3, 4});
    CHECK(tape.value(r).item() >= 0.0);
}

TEST_CASE("cross entropy reads only the gathered target rows") {
    Rng rng(6);
    Tensor h = random_tensor(6, 5, rng);
    Tensor w = random_tensor(5, 8, rng);
    auto loss_of = [&](const Tensor& hidden) {
        Tape tape;
        const auto logits = tape.matmul(tape.gather_rows(tape.input(hidden), {1, 4}),
                                        tape.input(w));
        return tape.value(tape.cross_entropy(logits, {2, 7})).item();
    };
    const double before = loss_of(h);
    h.at(0, 0) += 100.0; // non-target rows
    h.at(3, 2) -= 5.0;
    h.at(5, 4) = 0.0;
    CHECK(loss_of(h) == before);
}

TEST_CASE("parameter storage is always f32 representable") {
    ParameterSet ps;
    ps.add("p", Tensor::row({0.1, 1.0 / 3.0, 2.7182818284590452}));
    for (int j = 0; j < 3; ++j) {
        const double v = ps.at("p").value[j];
        CHECK(static_cast<double>(static_cast<float>(v)) == v);
    }
}
