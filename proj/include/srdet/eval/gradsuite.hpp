#pragma once

#include <string>
#include <vector>

#include "srdet/core/gradcheck.hpp"
#include "srdet/core/ops.hpp"
#include "srdet/sr/srnet.hpp"
#include "srdet/train/multibox.hpp"

namespace srdet {

struct GradSuiteEntry {
    std::string name;
    GradCheckReport report;
    double tolerance = 1e-4;
};

struct GradSuiteResult {
    std::vector<GradSuiteEntry> entries;
    bool all_pass = true;
};

namespace detail {

template <typename T>
Value<T> readout_sq(const Value<T>& x) {
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

} // namespace detail

/// The standard finite-difference suite: conv2d, pixel_shuffle, l1_loss,
/// multibox_loss at 1e-4 and a tiny full SR forward at 1e-3, all in double
/// precision with epsilon 1e-5.
inline GradSuiteResult run_grad_suite() {
    GradSuiteResult result;
    auto run = [&result](const std::string& name, ParameterStore<double>& store,
                         const std::function<double(ParameterStore<double>&, bool)>& loss,
                         double tol, int subsample = 0) {
        GradCheckOptions opt;
        opt.tolerance = tol;
        opt.max_elements_per_param = subsample;
        GradSuiteEntry entry{name, grad_check(store, loss, opt), tol};
        result.all_pass = result.all_pass && entry.report.pass;
        result.entries.push_back(std::move(entry));
    };

    {
        ParameterStore<double> store;
        Rng rng(1001);
        const std::vector<std::pair<std::string, Shape>> specs = {
            {"x", Shape{2, 5, 5}}, {"w", conv_weight_shape(3, 2, 3)}, {"b", Shape{3, 1, 1}}};
        for (const auto& [name, shape] : specs) {
            auto& t = store.create(name, shape);
            for (auto& v : t) v = rng.uniform(-1, 1);
        }
        run("conv2d", store,
            [](ParameterStore<double>& s, bool with_grad) {
                Graph<double> g(s);
                auto l = detail::readout_sq(conv2d(g.param("x"), g.param("w"), g.param("b"), 1, 1));
                if (with_grad) g.backward(l);
                return l->value[0];
            },
            1e-4);
    }

    {
        ParameterStore<double> store;
        Rng rng(1002);
        auto& t = store.create("x", Shape{8, 3, 3});
        for (auto& v : t) v = rng.uniform(-1, 1);
        run("pixel_shuffle", store,
            [](ParameterStore<double>& s, bool with_grad) {
                Graph<double> g(s);
                auto l = detail::readout_sq(pixel_shuffle(g.param("x"), 2));
                if (with_grad) g.backward(l);
                return l->value[0];
            },
            1e-4);
    }

    {
        ParameterStore<double> store;
        Rng rng(1003);
        auto& t = store.create("a", Shape{2, 4, 4});
        for (auto& v : t) v = rng.uniform(-1, 1);
        TensorD target(2, 4, 4);
        for (auto& v : target) v = rng.uniform(-1, 1);
        run("l1_loss", store,
            [target](ParameterStore<double>& s, bool with_grad) {
                Graph<double> g(s);
                auto l = l1_loss(g.param("a"), g.input(target));
                if (with_grad) g.backward(l);
                return l->value[0];
            },
            1e-4);
    }

    {
        // Tiny prior set; offsets sit inside the smooth-L1 quadratic zone
        // and logits are well separated so mining picks a stable set.
        std::vector<PriorBox> priors;
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                priors.push_back(PriorBox{(x + 0.5) / 2, (y + 0.5) / 2, 0.5, 0.5, 0});
        const Box gt{5, 5, 55, 55};
        const MatchResult match = match_priors({gt}, {0}, priors, 100, 100);

        ParameterStore<double> store;
        Rng rng(1004);
        auto& loc = store.create("loc", Shape{1, 4, 4});
        for (int p = 0; p < 4; ++p)
            for (int j = 0; j < 4; ++j)
                loc.at(0, p, j) = match.loc_targets[p][j] + 0.3 * (((p + j) % 2) ? 1 : -1);
        auto& conf = store.create("conf", Shape{1, 4, 2});
        for (auto& v : conf) v = rng.uniform(-1.5, 1.5);

        run("multibox_loss", store,
            [match](ParameterStore<double>& s, bool with_grad) {
                Graph<double> g(s);
                auto out = multibox_loss(g.param("loc"), g.param("conf"), match, 3.0);
                if (with_grad) g.backward(out.total);
                return out.total->value[0];
            },
            1e-4);
    }

    {
        SrNetConfig cfg;
        cfg.num_blocks = 2;
        cfg.base_channels = 8;
        cfg.alpha = 2;
        cfg.rdb.num_layers = 2;
        cfg.rdb.growth = 4;
        cfg.rdb.base_channels = 8;
        const SrNet net(cfg);
        ParameterStore<double> store;
        Rng rng(1005);
        net.init_params(store, rng);
        Rng img_rng(1006);
        TensorD lr(3, 8, 8);
        for (auto& v : lr) v = img_rng.uniform();
        TensorD target(3, 16, 16);
        for (auto& v : target) v = img_rng.uniform();
        run("sr_forward (tiny composite)", store,
            [&net, lr, target](ParameterStore<double>& s, bool with_grad) {
                Graph<double> g(s);
                auto trace = net.forward(g, lr);
                auto l = l1_loss(trace.sr_image, g.input(target));
                if (with_grad) g.backward(l);
                return l->value[0];
            },
            1e-3, /*subsample=*/40);
    }

    return result;
}

} // namespace srdet
