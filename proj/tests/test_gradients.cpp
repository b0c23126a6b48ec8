#include <gtest/gtest.h>

#include "srdet/core/gradcheck.hpp"
#include "srdet/core/graph.hpp"
#include "srdet/core/ops.hpp"
#include "srdet/core/rng.hpp"

using namespace srdet;

namespace {

void fill_random(Tensor<double>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (auto& v : t) v = rng.uniform(lo, hi);
}

/// Squared-sum readout so upstream gradients are non-trivial.
template <typename T>
Value<T> sq_sum(const Value<T>& x) {
    Tensor<T> out(1, 1, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i)
        acc += 0.5 * static_cast<double>(x->value[i]) * static_cast<double>(x->value[i]);
    out[0] = static_cast<T>(acc);
    auto node = make_node(std::move(out));
    node->parents = {x};
    node->requires_grad = x->requires_grad;
    if (node->requires_grad)
        node->backprop = [](Node<T>& self) {
            Tensor<T>& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += self.grad[0] * self.parents[0]->value[i];
        };
    return node;
}

} // namespace

TEST(GradCheck, Conv2dInputAndParams) {
    Rng rng(100);
    ParameterStore<double> store;
    fill_random(store.create("x", Shape{2, 5, 5}), rng);
    fill_random(store.create("w", conv_weight_shape(3, 2, 3)), rng);
    fill_random(store.create("b", Shape{3, 1, 1}), rng);

    auto loss = [](ParameterStore<double>& s, bool with_grad) {
        Graph<double> g(s);
        auto out = conv2d(g.param("x"), g.param("w"), g.param("b"), 1, 1);
        auto l = sq_sum(out);
        if (with_grad) g.backward(l);
        return static_cast<double>(l->value[0]);
    };
    auto report = grad_check(store, loss);
    EXPECT_TRUE(report.pass) << "worst " << report.worst_param << " err " << report.max_rel_error;
    EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(GradCheck, Conv2dStride2) {
    Rng rng(101);
    ParameterStore<double> store;
    fill_random(store.create("x", Shape{3, 7, 7}), rng);
    fill_random(store.create("w", conv_weight_shape(2, 3, 3)), rng);
    fill_random(store.create("b", Shape{2, 1, 1}), rng);
    auto loss = [](ParameterStore<double>& s, bool with_grad) {
        Graph<double> g(s);
        auto l = sq_sum(conv2d(g.param("x"), g.param("w"), g.param("b"), 2, 1));
        if (with_grad) g.backward(l);
        return l->value[0];
    };
    auto report = grad_check(store, loss);
    EXPECT_TRUE(report.pass) << report.worst_param << " " << report.max_rel_error;
}

TEST(GradCheck, PixelShuffleIsExactPermutation) {
    Rng rng(102);
    ParameterStore<double> store;
    fill_random(store.create("x", Shape{8, 3, 3}), rng);
    Graph<double> g(store);
    auto out = pixel_shuffle(g.param("x"), 2);
    auto l = sq_sum(out);
    g.backward(l);
    // Gradient of 0.5*sum(out^2) w.r.t. x is the permuted x itself: exact.
    const Tensor<double>& grad = store.grad("x");
    for (std::size_t i = 0; i < grad.size(); ++i) EXPECT_DOUBLE_EQ(grad[i], store.value("x")[i]);
}

TEST(GradCheck, L1ExactSignGradient) {
    Rng rng(103);
    ParameterStore<double> store;
    fill_random(store.create("a", Shape{2, 4, 4}), rng);
    TensorD target(2, 4, 4);
    fill_random(target, rng);
    Graph<double> g(store);
    auto l = l1_loss(g.param("a"), g.input(target));
    g.backward(l);
    const auto& a = store.value("a");
    const auto& grad = store.grad("a");
    const double unit = 1.0 / a.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double expect = a[i] > target[i] ? unit : (a[i] < target[i] ? -unit : 0.0);
        EXPECT_DOUBLE_EQ(grad[i], expect);
    }
}

TEST(GradCheck, MaxPoolAndRelu) {
    Rng rng(104);
    ParameterStore<double> store;
    fill_random(store.create("x", Shape{2, 6, 6}), rng);
    auto loss = [](ParameterStore<double>& s, bool with_grad) {
        Graph<double> g(s);
        auto l = sq_sum(max_pool2(relu(g.param("x"))));
        if (with_grad) g.backward(l);
        return l->value[0];
    };
    auto report = grad_check(store, loss);
    EXPECT_TRUE(report.pass) << report.worst_param << " " << report.max_rel_error;
}

TEST(GradCheck, BicubicResizeLinearOp) {
    Rng rng(105);
    ParameterStore<double> store;
    fill_random(store.create("x", Shape{2, 6, 6}), rng);
    auto loss = [](ParameterStore<double>& s, bool with_grad) {
        Graph<double> g(s);
        auto l = sq_sum(resize_bicubic(g.param("x"), 9, 4));
        if (with_grad) g.backward(l);
        return l->value[0];
    };
    auto report = grad_check(store, loss);
    EXPECT_TRUE(report.pass) << report.worst_param << " " << report.max_rel_error;
}

TEST(GradCheck, ConcatAddReluChain) {
    Rng rng(106);
    ParameterStore<double> store;
    fill_random(store.create("x", Shape{3, 4, 4}), rng);
    fill_random(store.create("y", Shape{2, 4, 4}), rng);
    fill_random(store.create("w", conv_weight_shape(3, 5, 1)), rng);
    fill_random(store.create("b", Shape{3, 1, 1}), rng);
    auto loss = [](ParameterStore<double>& s, bool with_grad) {
        Graph<double> g(s);
        auto x = g.param("x");
        auto cat = concat_channels<double>({x, g.param("y")});
        auto fused = conv2d(cat, g.param("w"), g.param("b"));
        auto l = sq_sum(add(relu(fused), x));
        if (with_grad) g.backward(l);
        return l->value[0];
    };
    auto report = grad_check(store, loss);
    EXPECT_TRUE(report.pass) << report.worst_param << " " << report.max_rel_error;
}

TEST(GradCheck, ReportsNonFiniteGradient) {
    ParameterStore<double> store;
    store.create("x", Shape{1, 1, 1}, 1.0);
    auto loss = [](ParameterStore<double>& s, bool with_grad) {
        if (with_grad) s.grad("x")[0] = std::numeric_limits<double>::quiet_NaN();
        return s.value("x")[0];
    };
    auto report = grad_check(store, loss);
    EXPECT_FALSE(report.pass);
    ASSERT_FALSE(report.failures.empty());
    EXPECT_NE(report.failures[0].find("x"), std::string::npos);
}

TEST(Graph, BackwardRequiresScalarRoot) {
    ParameterStore<double> store;
    store.create("x", Shape{1, 2, 2}, 1.0);
    Graph<double> g(store);
    auto x = g.param("x");
    EXPECT_THROW(g.backward(x), ShapeError);
}

TEST(Graph, InferenceModeSkipsTape) {
    ParameterStore<double> store;
    Rng rng(107);
    fill_random(store.create("w", conv_weight_shape(2, 1, 3)), rng);
    fill_random(store.create("b", Shape{2, 1, 1}), rng);
    Graph<double> g(store, /*trainable=*/false);
    TensorD img(1, 5, 5, 0.3);
    auto out = conv2d(g.input(img), g.param("w"), g.param("b"), 1, 1);
    EXPECT_FALSE(out->requires_grad);
}
