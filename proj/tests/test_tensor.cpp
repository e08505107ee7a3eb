#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "adkd/ops.hpp"
#include "adkd/optim.hpp"
#include "adkd/tensor.hpp"
#include "testutil.hpp"

using namespace adkd;
using testutil::fd_gradient;
using testutil::max_rel_err;
using testutil::random_tensor;

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor::from_data({1}, {std::nanf("")}), NumericError);
    CHECK_THROWS_AS(Tensor::from_data({1}, {INFINITY}), NumericError);
    Tensor t = Tensor::zeros({3, 4});
    CHECK(t.numel() == 12);
}

TEST_CASE("matmul") {
    // identity case
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor v = Tensor::from_data({2, 1}, {5, 6});
    Tensor r = matmul(eye, v);
    CHECK(r.data()[0] == 5);
    CHECK(r.data()[1] == 6);

    // naive triple-loop value
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = matmul(a, v);
    CHECK(b.data()[0] == 17);
    CHECK(b.data()[1] == 39);

    CHECK_THROWS_AS(matmul(Tensor::from_data({1, 2}, {1, 2}),
                           Tensor::from_data({1, 2}, {1, 2})),
                    DimensionError);
}

TEST_CASE("matmul matches triple-loop oracle on random inputs") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor c = matmul(a, b);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 5; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k)
                acc += static_cast<double>(a.data()[i * 4 + k]) * b.data()[k * 5 + j];
            CHECK(c.data()[i * 5 + j] == doctest::Approx(acc).epsilon(1e-6));
        }
    }
}

TEST_CASE("conv2d") {
    SUBCASE("identity 1x1 kernel") {
        Rng rng(1);
        Tensor x = random_tensor({1, 1, 3, 3}, rng);
        Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0f});
        Tensor y = conv2d(x, w, {}, 1, 0);
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
    }
    SUBCASE("all-ones window") {
        Tensor x = Tensor::full({1, 1, 2, 2}, 1.0f);
        Tensor w = Tensor::full({1, 1, 2, 2}, 1.0f);
        Tensor y = conv2d(x, w, {}, 1, 0);
        CHECK(y.shape() == Shape{1, 1, 1, 1});
        CHECK(y.data()[0] == 4.0f);
    }
    SUBCASE("shape arithmetic") {
        Tensor x = Tensor::zeros({1, 1, 4, 4});
        Tensor w = Tensor::zeros({2, 1, 3, 3});
        Tensor y = conv2d(x, w, {}, 2, 1);
        CHECK(y.shape() == Shape{1, 2, 2, 2});
    }
    SUBCASE("kernel larger than padded input") {
        Tensor x = Tensor::zeros({1, 1, 2, 2});
        Tensor w = Tensor::zeros({1, 1, 5, 5});
        CHECK_THROWS_AS(conv2d(x, w, {}, 1, 0), DimensionError);
    }
    SUBCASE("output extents follow the floor formula") {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            const int H = 1 + static_cast<int>(rng.next_below(10));
            const int W = 1 + static_cast<int>(rng.next_below(10));
            const int k = 1 + static_cast<int>(rng.next_below(4));
            const int s = 1 + static_cast<int>(rng.next_below(3));
            const int p = static_cast<int>(rng.next_below(3));
            if (k > H + 2 * p || k > W + 2 * p) continue;
            Tensor x = Tensor::zeros({1, 1, H, W});
            Tensor w = Tensor::zeros({1, 1, k, k});
            Tensor y = conv2d(x, w, {}, s, p);
            CHECK(y.dim(2) == (H + 2 * p - k) / s + 1);
            CHECK(y.dim(3) == (W + 2 * p - k) / s + 1);
        }
    }
}

TEST_CASE("conv2d matches sliding-window oracle") {
    Rng rng(11);
    Tensor x = random_tensor({1, 2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor y = conv2d(x, w, {}, 2, 1);
    for (int o = 0; o < 3; ++o) {
        for (int oh = 0; oh < y.dim(2); ++oh) {
            for (int ow = 0; ow < y.dim(3); ++ow) {
                double acc = 0.0;
                for (int c = 0; c < 2; ++c)
                    for (int kh = 0; kh < 3; ++kh)
                        for (int kw = 0; kw < 3; ++kw) {
                            int ih = oh * 2 + kh - 1, iw = ow * 2 + kw - 1;
                            if (ih < 0 || ih >= 5 || iw < 0 || iw >= 5) continue;
                            acc += static_cast<double>(x.data()[(c * 5 + ih) * 5 + iw]) *
                                   w.data()[((o * 2 + c) * 3 + kh) * 3 + kw];
                        }
                CHECK(y.data()[(o * y.dim(2) + oh) * y.dim(3) + ow] ==
                      doctest::Approx(acc).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("rot90") {
    Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    SUBCASE("k=0 identity") {
        Tensor y = rot90(x, 0);
        CHECK(std::vector<float>(y.data().begin(), y.data().end()) ==
              std::vector<float>{1, 2, 3, 4});
    }
    SUBCASE("k=1 index map") {
        Tensor y = rot90(x, 1);
        CHECK(std::vector<float>(y.data().begin(), y.data().end()) ==
              std::vector<float>{2, 4, 1, 3});
    }
    SUBCASE("four quarter turns compose to identity") {
        Rng rng(5);
        Tensor t = random_tensor({2, 3, 4}, rng);
        Tensor y = rot90(rot90(rot90(rot90(t, 1), 1), 1), 1);
        CHECK(y.shape() == t.shape());
        for (std::size_t i = 0; i < t.numel(); ++i) CHECK(y.data()[i] == t.data()[i]);
    }
    SUBCASE("odd k swaps spatial extents") {
        Tensor t = Tensor::zeros({1, 2, 3});
        CHECK(rot90(t, 1).shape() == Shape{1, 3, 2});
        CHECK(rot90(t, 2).shape() == Shape{1, 2, 3});
    }
    CHECK_THROWS_AS(rot90(x, 4), ArgumentError);
    CHECK_THROWS_AS(rot90(x, -1), ArgumentError);
}

TEST_CASE("relu") {
    Tensor x = Tensor::from_data({3}, {-1, 0, 2}, true);
    Tensor y = relu(x);
    CHECK(std::vector<float>(y.data().begin(), y.data().end()) ==
          std::vector<float>{0, 0, 2});

    Tensor neg = Tensor::from_data({4}, {-1, -2, -3, -4}, true);
    Tensor loss = sum_all(relu(neg));
    backward(loss);
    for (float g : neg.grad()) CHECK(g == 0.0f);
    Tensor clipped = relu(neg);
    for (float v : clipped.data()) CHECK(v == 0.0f);
}

TEST_CASE("global_avg_pool") {
    SUBCASE("1x1 spatial passthrough") {
        Tensor x = Tensor::from_data({1, 3, 1, 1}, {1, 2, 3});
        Tensor y = global_avg_pool(x);
        CHECK(std::vector<float>(y.data().begin(), y.data().end()) ==
              std::vector<float>{1, 2, 3});
    }
    SUBCASE("mean of 1..4") {
        Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
        CHECK(global_avg_pool(x).data()[0] == 2.5f);
    }
    SUBCASE("constant input") {
        Tensor x = Tensor::full({2, 3, 4, 4}, 0.7f);
        Tensor pooled = global_avg_pool(x);
        for (float v : pooled.data()) CHECK(v == doctest::Approx(0.7f));
    }
}

TEST_CASE("mse_loss") {
    Tensor p = Tensor::from_data({2}, {1, 2}, true);
    Tensor t = Tensor::from_data({2}, {0, 0});
    CHECK(mse_loss(p.detach_copy(), p.detach_copy()).item() == 0.0f);
    Tensor loss = mse_loss(p, t);
    CHECK(loss.item() == 2.5f);
    backward(loss);
    CHECK(p.grad()[0] == doctest::Approx(1.0f));
    CHECK(p.grad()[1] == doctest::Approx(2.0f));
    CHECK_THROWS_AS(mse_loss(p, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("mse_loss target is detached") {
    Tensor p = Tensor::from_data({2}, {1, 2}, true);
    Tensor t = Tensor::from_data({2}, {0, 1}, true);
    t.zero_grad();
    backward(mse_loss(p, t));
    for (float g : t.grad()) CHECK(g == 0.0f);
}

TEST_CASE("softmax_cross_entropy") {
    SUBCASE("uniform logits give ln K") {
        Tensor l = Tensor::zeros({1, 4});
        CHECK(softmax_cross_entropy(l, {2}).item() ==
              doctest::Approx(std::log(4.0)).epsilon(1e-6));
    }
    SUBCASE("loss decreases monotonically with margin") {
        double prev = 1e30;
        for (float margin : {0.0f, 1.0f, 3.0f, 10.0f, 30.0f}) {
            Tensor l = Tensor::from_data({1, 3}, {margin, 0.0f, 0.0f});
            double v = softmax_cross_entropy(l, {0}).item();
            CHECK(v < prev);
            prev = v;
        }
        CHECK(prev < 1e-10);
    }
    SUBCASE("matches direct formula on random logits") {
        Rng rng(17);
        Tensor l = random_tensor({5, 7}, rng, -3.0f, 3.0f);
        std::vector<int> labels;
        for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(rng.next_below(7)));
        double expect = 0.0;
        for (int i = 0; i < 5; ++i) {
            double denom = 0.0;
            for (int k = 0; k < 7; ++k) denom += std::exp(static_cast<double>(l.data()[i * 7 + k]));
            expect -= std::log(std::exp(static_cast<double>(l.data()[i * 7 + labels[i]])) / denom);
        }
        expect /= 5.0;
        CHECK(softmax_cross_entropy(l, labels).item() ==
              doctest::Approx(expect).epsilon(1e-6));
    }
    SUBCASE("out-of-range label") {
        Tensor l = Tensor::zeros({1, 3});
        CHECK_THROWS_AS(softmax_cross_entropy(l, {3}), ArgumentError);
        CHECK_THROWS_AS(softmax_cross_entropy(l, {-1}), ArgumentError);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("x*x at 3") {
        Tensor x = Tensor::from_data({1}, {3}, true);
        Tensor loss = sum_all(mul(x, x));
        backward(loss);
        CHECK(x.grad()[0] == 6.0f);
    }
    SUBCASE("two paths accumulate") {
        Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
        Tensor loss = add(sum_all(x), sum_all(x));
        backward(loss);
        for (float g : x.grad()) CHECK(g == 2.0f);
    }
    SUBCASE("non-scalar loss rejected") {
        Tensor x = Tensor::from_data({2}, {1, 2}, true);
        CHECK_THROWS_AS(backward(x), ArgumentError);
    }
    SUBCASE("backward twice is a state error") {
        Tensor x = Tensor::from_data({1}, {2}, true);
        Tensor loss = mul(x, x);
        backward(loss);
        CHECK_THROWS_AS(backward(loss), StateError);
    }
}

TEST_CASE("gradient check: random two-layer net") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({2, 6}, rng);
        Tensor w1 = random_tensor({6, 5}, rng, -0.5f, 0.5f, true);
        Tensor b1 = random_tensor({5}, rng, -0.2f, 0.2f, true);
        Tensor w2 = random_tensor({5, 3}, rng, -0.5f, 0.5f, true);
        Tensor target = random_tensor({2, 3}, rng);
        auto eval = [&] {
            Tensor h = relu(bias_add_rows(matmul(x, w1), b1));
            return static_cast<double>(mse_loss(matmul(h, w2), target).item());
        };
        Tensor h = relu(bias_add_rows(matmul(x, w1), b1));
        Tensor loss = mse_loss(matmul(h, w2), target);
        w1.zero_grad();
        b1.zero_grad();
        w2.zero_grad();
        backward(loss);
        CHECK(max_rel_err(w1.grad(), fd_gradient(eval, w1)) < 1e-3);
        CHECK(max_rel_err(b1.grad(), fd_gradient(eval, b1)) < 1e-3);
        CHECK(max_rel_err(w2.grad(), fd_gradient(eval, w2)) < 1e-3);
    }
}

TEST_CASE("gradient check: conv, pool, rotation, nt_xent compositions") {
    Rng rng(29);
    SUBCASE("conv + relu + gap") {
        Tensor x = random_tensor({1, 2, 4, 4}, rng, -1, 1, true);
        Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5f, 0.5f, true);
        Tensor b = random_tensor({3}, rng, -0.2f, 0.2f, true);
        Tensor target = random_tensor({1, 3}, rng);
        auto eval = [&] {
            return static_cast<double>(
                mse_loss(global_avg_pool(relu(conv2d(x, w, b, 1, 1))), target).item());
        };
        x.zero_grad();
        w.zero_grad();
        b.zero_grad();
        backward(mse_loss(global_avg_pool(relu(conv2d(x, w, b, 1, 1))), target));
        CHECK(max_rel_err(x.grad(), fd_gradient(eval, x)) < 1e-3);
        CHECK(max_rel_err(w.grad(), fd_gradient(eval, w)) < 1e-3);
        CHECK(max_rel_err(b.grad(), fd_gradient(eval, b)) < 1e-3);
    }
    SUBCASE("rot90 + upsample + reshape path") {
        Tensor x = random_tensor({1, 1, 3, 3}, rng, -1, 1, true);
        Tensor target = random_tensor({1, 36}, rng);
        auto eval = [&] {
            Tensor y = upsample_nearest2d(rot90(x, 1), 2);
            return static_cast<double>(mse_loss(reshape(y, {1, 36}), target).item());
        };
        x.zero_grad();
        backward(mse_loss(reshape(upsample_nearest2d(rot90(x, 1), 2), {1, 36}), target));
        CHECK(max_rel_err(x.grad(), fd_gradient(eval, x)) < 1e-3);
    }
    SUBCASE("nt_xent") {
        Tensor e = random_tensor({6, 4}, rng, -1, 1, true);
        auto eval = [&] { return static_cast<double>(nt_xent_loss(e, 0.5f).item()); };
        e.zero_grad();
        backward(nt_xent_loss(e, 0.5f));
        CHECK(max_rel_err(e.grad(), fd_gradient(eval, e, 1e-2), 0.01) < 2e-3);
    }
    SUBCASE("softmax cross entropy") {
        Tensor l = random_tensor({4, 5}, rng, -2, 2, true);
        std::vector<int> labels{0, 3, 2, 4};
        auto eval = [&] {
            return static_cast<double>(softmax_cross_entropy(l, labels).item());
        };
        l.zero_grad();
        backward(softmax_cross_entropy(l, labels));
        CHECK(max_rel_err(l.grad(), fd_gradient(eval, l, 1e-2), 0.01) < 1e-3);
    }
}

TEST_CASE("linearity of backward") {
    Rng rng(31);
    Tensor x = random_tensor({8}, rng, -1, 1, true);
    Tensor t1 = random_tensor({8}, rng);
    Tensor t2 = random_tensor({8}, rng);
    const float a = 2.5f, b = -1.25f;

    x.zero_grad();
    backward(mse_loss(x, t1));
    std::vector<float> g1(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(mse_loss(x, t2));
    std::vector<float> g2(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(add(scale(mse_loss(x, t1), a), scale(mse_loss(x, t2), b)));
    for (std::size_t i = 0; i < x.numel(); ++i) {
        CHECK(x.grad()[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-6));
    }
}

TEST_CASE("determinism: identical seeds give bit-identical results") {
    auto run = [] {
        Rng rng(99);
        Tensor x = random_tensor({2, 3, 5, 5}, rng, -1, 1, true);
        Tensor w = random_tensor({4, 3, 3, 3}, rng, -0.4f, 0.4f, true);
        Tensor t = random_tensor({2, 4}, rng);
        x.zero_grad();
        w.zero_grad();
        Tensor loss = mse_loss(global_avg_pool(relu(conv2d(x, w, {}, 1, 1))), t);
        backward(loss);
        std::vector<float> out{loss.item()};
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        Tensor p = Tensor::from_data({3}, {1, 2, 3}, true);
        p.zero_grad();
        std::vector<Tensor> params{p};
        AdamState st;
        st.step(params);
        CHECK(std::vector<float>(p.data().begin(), p.data().end()) ==
              std::vector<float>{1, 2, 3});
        CHECK(st.step_count() == 1);
    }
    SUBCASE("first step moves by ~lr*sign(g)") {
        Tensor p = Tensor::from_data({1}, {0.5f}, true);
        p.zero_grad();
        Tensor loss = scale(sum_all(p), 3.0f);  // grad = 3
        backward(loss);
        std::vector<Tensor> params{p};
        AdamConfig cfg;
        cfg.lr = 0.01f;
        AdamState st(cfg);
        st.step(params);
        CHECK(p.data()[0] == doctest::Approx(0.5f - 0.01f).epsilon(1e-4));
    }
    SUBCASE("quadratic loss converges") {
        Tensor w = Tensor::from_data({1}, {1.0f}, true);
        std::vector<Tensor> params{w};
        AdamConfig cfg;
        cfg.lr = 0.1f;
        AdamState st(cfg);
        // |w| oscillates around zero once it gets small, so check a decaying
        // envelope rather than strict monotonicity
        float early_peak = 0.0f, late_peak = 0.0f;
        for (int i = 0; i < 100; ++i) {
            w.zero_grad();
            backward(mul(w, w));
            st.step(params);
            const float cur = std::fabs(w.data()[0]);
            if (i < 25) early_peak = std::max(early_peak, cur);
            if (i >= 75) late_peak = std::max(late_peak, cur);
        }
        CHECK(late_peak < 0.25f * early_peak);
        CHECK(std::fabs(w.data()[0]) < 0.1f);
    }
    SUBCASE("NaN gradient raises a numeric error naming the parameter") {
        Tensor p = Tensor::from_data({1}, {1.0f}, true);
        p.zero_grad();
        // poke a NaN into the grad buffer directly
        const_cast<float&>(p.grad()[0]) = std::nanf("");
        std::vector<Tensor> params{p};
        AdamState st;
        bool threw = false;
        try {
            st.step(params, {"conv1.weight"});
        } catch (const NumericError& e) {
            threw = true;
            CHECK(std::string(e.what()).find("conv1.weight") != std::string::npos);
        }
        CHECK(threw);
    }
}
