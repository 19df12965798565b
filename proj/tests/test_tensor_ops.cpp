#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "quickloc/layers.hpp"
#include "quickloc/net.hpp"

using namespace quickloc;

namespace {

Tensor3 make(int h, int w, int c, std::initializer_list<Real> vals) {
  Tensor3 t(h, w, c);
  REQUIRE(t.data.size() == vals.size());
  std::copy(vals.begin(), vals.end(), t.data.begin());
  return t;
}

// Independent oracle for the valid-convolution extent: count the window
// placements directly instead of using the closed form.
int count_placements(int in, int k, int stride) {
  int n = 0;
  for (int o = 0; o + k <= in; o += stride) ++n;
  return n;
}

}  // namespace

TEST_CASE("conv2d forward examples") {
  SUBCASE("30x30x1 with 32 2x2 filters gives 29x29x32") {
    Tensor3 in(30, 30, 1);
    std::vector<Real> w(2 * 2 * 1 * 32, 0.1f), b(32, 0.f);
    auto out = conv2d_forward(in, w, b, 2, 2, 1);
    CHECK(out.shape() == Shape3{29, 29, 32});
  }
  SUBCASE("hand arithmetic 2x2 identity-diagonal filter") {
    auto in = make(2, 2, 1, {1, 2, 3, 4});
    std::vector<Real> w = {1, 0, 0, 1};  // [[1,0],[0,1]]
    auto out = conv2d_forward(in, w, {0.f}, 2, 2, 1);
    CHECK(out.shape() == Shape3{1, 1, 1});
    CHECK(out.data[0] == doctest::Approx(5.0));
  }
  SUBCASE("all-zero filter yields constant bias") {
    std::mt19937 rng(7);
    Tensor3 in(5, 4, 3);
    for (auto& v : in.data) v = std::uniform_real_distribution<float>(-2, 2)(rng);
    std::vector<Real> w(2 * 2 * 3 * 1, 0.f);
    auto out = conv2d_forward(in, w, {1.25f}, 2, 2, 1);
    for (Real v : out.data) CHECK(v == 1.25f);
  }
  SUBCASE("filter channel mismatch is a shape error") {
    Tensor3 in(4, 4, 2);
    std::vector<Real> w(2 * 2 * 3 * 1, 0.f);  // claims Cin=3
    CHECK_THROWS_AS(conv2d_forward(in, w, {0.f}, 2, 2, 1), ShapeError);
  }
  SUBCASE("kernel larger than input is a shape error") {
    Tensor3 in(2, 2, 1);
    std::vector<Real> w(3 * 3 * 1 * 1, 0.f);
    CHECK_THROWS_AS(conv2d_forward(in, w, {0.f}, 3, 3, 1), ShapeError);
  }
}

TEST_CASE("depthwise conv forward examples") {
  SUBCASE("all-ones filters sum each 2x2 channel to 4") {
    Tensor3 in(2, 2, 2);
    for (auto& v : in.data) v = 1.f;
    std::vector<Real> w(2 * 2 * 2, 1.f), b(2, 0.f);
    auto out = depthwise_conv2d_forward(in, w, b, 2, 2, 1);
    CHECK(out.shape() == Shape3{1, 1, 2});
    CHECK(out.data[0] == doctest::Approx(4.0));
    CHECK(out.data[1] == doctest::Approx(4.0));
  }
  SUBCASE("top-left selector filter crops each channel") {
    auto in = make(3, 3, 1, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    std::vector<Real> w = {1, 0, 0, 0};  // [[1,0],[0,0]]
    auto out = depthwise_conv2d_forward(in, w, {0.f}, 2, 2, 1);
    CHECK(out.shape() == Shape3{2, 2, 1});
    CHECK(out.data == std::vector<Real>{1, 2, 4, 5});
  }
  SUBCASE("28x28x64 keeps 64 channels at 27x27") {
    Tensor3 in(28, 28, 64);
    std::vector<Real> w(2 * 2 * 64, 0.5f), b(64, 0.f);
    auto out = depthwise_conv2d_forward(in, w, b, 2, 2, 1);
    CHECK(out.shape() == Shape3{27, 27, 64});
  }
  SUBCASE("filter count must match channels") {
    Tensor3 in(4, 4, 3);
    std::vector<Real> w(2 * 2 * 2, 1.f), b(2, 0.f);
    CHECK_THROWS_AS(depthwise_conv2d_forward(in, w, b, 2, 2, 1), ShapeError);
  }
}

TEST_CASE("pointwise conv forward examples") {
  SUBCASE("pixel (3,4) with weights (1,1) gives 7") {
    auto in = make(1, 1, 2, {3, 4});
    std::vector<Real> w = {1, 1};  // 1x1x2x1
    auto out = pointwise_conv2d_forward(in, w, {0.f});
    CHECK(out.data[0] == doctest::Approx(7.0));
  }
  SUBCASE("identity filter matrix reproduces the input") {
    std::mt19937 rng(3);
    Tensor3 in(4, 5, 3);
    for (auto& v : in.data) v = std::uniform_real_distribution<float>(-1, 1)(rng);
    std::vector<Real> w(3 * 3, 0.f);
    for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.f;
    std::vector<Real> b(3, 0.f);
    auto out = pointwise_conv2d_forward(in, w, b);
    CHECK(out.data == in.data);
  }
  SUBCASE("27x27x64 remapped to 8 channels") {
    Tensor3 in(27, 27, 64);
    std::vector<Real> w(64 * 8, 0.01f), b(8, 0.f);
    auto out = pointwise_conv2d_forward(in, w, b);
    CHECK(out.shape() == Shape3{27, 27, 8});
  }
}

TEST_CASE("maxpool forward examples") {
  SUBCASE("2x2 window over [[1,2],[3,4]]") {
    auto in = make(2, 2, 1, {1, 2, 3, 4});
    auto out = maxpool_forward(in, 2, 2, 1);
    CHECK(out.shape() == Shape3{1, 1, 1});
    CHECK(out.data[0] == 4.f);
  }
  SUBCASE("constant input stays constant") {
    Tensor3 in(4, 4, 2);
    for (auto& v : in.data) v = 0.75f;
    auto out = maxpool_forward(in, 2, 2, 2);
    for (Real v : out.data) CHECK(v == 0.75f);
  }
  SUBCASE("4x4 pooled 2x2 stride 2 gives 2x2") {
    Tensor3 in(4, 4, 1);
    CHECK(maxpool_forward(in, 2, 2, 2).shape() == Shape3{2, 2, 1});
  }
  SUBCASE("window larger than input is a shape error") {
    Tensor3 in(2, 2, 1);
    CHECK_THROWS_AS(maxpool_forward(in, 3, 3, 1), ShapeError);
  }
}

TEST_CASE("dense forward examples") {
  SUBCASE("identity weights, zero bias") {
    std::vector<Real> x = {1.5f, -2.f, 3.f};
    std::vector<Real> w(9, 0.f);
    for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.f;
    CHECK(dense_forward(x, w, std::vector<Real>(3, 0.f)) == x);
  }
  SUBCASE("length mismatch is a shape error") {
    std::vector<Real> x(4, 1.f), w(9, 0.f), b(3, 0.f);
    CHECK_THROWS_AS(dense_forward(x, w, b), ShapeError);
  }
  SUBCASE("hand arithmetic") {
    std::vector<Real> x = {1, 2};
    std::vector<Real> w = {1, 3, 2, 4};  // rows per input
    auto y = dense_forward(x, w, std::vector<Real>{10.f, 20.f});
    CHECK(y[0] == doctest::Approx(15.0));  // 1*1 + 2*2 + 10
    CHECK(y[1] == doctest::Approx(31.0));  // 1*3 + 2*4 + 20
  }
}

TEST_CASE("relu examples") {
  auto in = make(1, 1, 3, {-1.f, 2.5f, 0.f});
  auto out = relu(in);
  CHECK(out.data == std::vector<Real>{0.f, 2.5f, 0.f});
}

TEST_CASE("softmax examples and properties") {
  SUBCASE("two equal logits split evenly") {
    auto p = softmax(std::vector<double>{0.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
  }
  SUBCASE("constant logits are uniform for any constant") {
    for (double c : {-40.0, 0.0, 3.25, 1e4}) {
      auto p = softmax(std::vector<double>(4, c));
      for (double v : p) CHECK(v == doctest::Approx(0.25));
    }
  }
  SUBCASE("[ln 2, 0] -> [2/3, 1/3]") {
    auto p = softmax(std::vector<double>{std::log(2.0), 0.0});
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("empty input rejected") {
    CHECK_THROWS_AS(softmax(std::vector<double>{}), InvalidArgument);
  }
  SUBCASE("sum-to-one, shift invariance, argmax under scaling") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> logit(-8, 8);
    for (int it = 0; it < 200; ++it) {
      const int k = 2 + static_cast<int>(rng() % 9);
      std::vector<double> z(k);
      for (auto& v : z) v = logit(rng);
      auto p = softmax(z);
      double sum = 0;
      for (double v : p) {
        CHECK(v > 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);

      auto shifted = z;
      for (auto& v : shifted) v += 123.5;
      auto p2 = softmax(shifted);
      for (int i = 0; i < k; ++i) CHECK(p2[i] == doctest::Approx(p[i]).epsilon(1e-9));

      auto scaled = z;
      for (auto& v : scaled) v *= 2.5;
      const auto amax = [](const std::vector<double>& v) {
        return std::max_element(v.begin(), v.end()) - v.begin();
      };
      CHECK(amax(softmax(scaled)) == amax(p));
    }
  }
}

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy_loss(std::vector<double>{0.0, 1.0}, 1) == doctest::Approx(0.0));
  const int k = 5;
  CHECK(cross_entropy_loss(std::vector<double>(k, 1.0 / k), 2) ==
        doctest::Approx(std::log(double(k))));
  CHECK(cross_entropy_loss(std::vector<double>{1e-20, 1.0}, 0) ==
        doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(cross_entropy_loss(std::vector<double>{1.0}, 3), InvalidArgument);
}

TEST_CASE("parameter counting matches the closed forms") {
  // conv K*K*Cin*F + F
  CHECK(layer_param_count(LayerSpec::conv2d("c", 2, 32), {30, 30, 1}) == 160);
  CHECK(layer_param_count(LayerSpec::conv2d("c", 2, 8), {28, 28, 64}) == 2056);
  CHECK(layer_param_count(LayerSpec::conv2d("c", 2, 128), {28, 28, 64}) == 32896);
  CHECK(layer_param_count(LayerSpec::conv2d("c", 2, 64), {29, 29, 32}) == 8256);
  // dense n*m + m
  CHECK(layer_param_count(LayerSpec::dense("d", 342), {1, 1, 26912}) == 9204246);
  CHECK(layer_param_count(LayerSpec::dense("d", 342), {1, 1, 5832}) == 1994886);
  CHECK(layer_param_count(LayerSpec::dense("d", 342), {1, 1, 93312}) == 31913046);
  // activations, pools and reshapes carry none
  CHECK(layer_param_count(LayerSpec::relu(), {4, 4, 2}) == 0);
  CHECK(layer_param_count(LayerSpec::maxpool(2, 2), {4, 4, 2}) == 0);
  CHECK(layer_param_count(LayerSpec::flatten(), {4, 4, 2}) == 0);
}

TEST_CASE("mac counting") {
  SUBCASE("dense 4->3 is 12 MACs") {
    CHECK(layer_mac_count(LayerSpec::dense("d", 3), {1, 1, 4}) == 12);
  }
  SUBCASE("first conv of the reference geometry") {
    // formula oracle: out_h*out_w*F*K*K*Cin = 29*29*32*4
    CHECK(layer_mac_count(LayerSpec::conv2d("c", 2, 32), {30, 30, 1}) == 107648);
  }
  SUBCASE("empty prefix is zero") {
    std::vector<LayerSpec> layers = {LayerSpec::conv2d("c", 2, 4), LayerSpec::relu()};
    CHECK(mac_count_prefix(layers, {8, 8, 1}, 0) == 0);
  }
  SUBCASE("additive and monotone over prefixes") {
    std::vector<LayerSpec> layers = {
        LayerSpec::conv2d("c1", 2, 4), LayerSpec::relu(),
        LayerSpec::conv2d("c2", 2, 8), LayerSpec::relu(),
        LayerSpec::flatten(),          LayerSpec::dense("d", 5),
        LayerSpec::softmax()};
    const Shape3 in{9, 9, 1};
    std::int64_t prev = 0;
    Shape3 s = in;
    for (std::size_t n = 1; n <= layers.size(); ++n) {
      const auto macs = mac_count_prefix(layers, in, n);
      CHECK(macs == prev + layer_mac_count(layers[n - 1], s));
      if (layer_mac_count(layers[n - 1], s) > 0) CHECK(macs > prev);
      s = layer_output_shape(layers[n - 1], s);
      prev = macs;
    }
  }
}

TEST_CASE("shape algebra against placement-count oracle") {
  std::mt19937 rng(42);
  for (int it = 0; it < 300; ++it) {
    const int h = 1 + static_cast<int>(rng() % 12);
    const int w = 1 + static_cast<int>(rng() % 12);
    const int c = 1 + static_cast<int>(rng() % 4);
    const int k = 1 + static_cast<int>(rng() % 4);
    const int stride = 1 + static_cast<int>(rng() % 3);
    const Shape3 in{h, w, c};
    if (k <= h && k <= w) {
      const auto conv =
          layer_output_shape(LayerSpec{LayerKind::Conv2d, "c", k, k, stride, 3}, in);
      CHECK(conv.height == count_placements(h, k, stride));
      CHECK(conv.width == count_placements(w, k, stride));
      CHECK(conv.channels == 3);
      const auto pool = layer_output_shape(LayerSpec::maxpool(k, stride), in);
      CHECK(pool.height == count_placements(h, k, stride));
      CHECK(pool.channels == c);
    } else {
      CHECK_THROWS_AS(
          layer_output_shape(LayerSpec{LayerKind::Conv2d, "c", k, k, stride, 3}, in),
          ShapeError);
    }
    const auto flat = layer_output_shape(LayerSpec::flatten(), in);
    CHECK(flat == Shape3{1, 1, h * w * c});
    CHECK(layer_output_shape(LayerSpec::dense("d", 7), flat) == Shape3{1, 1, 7});
  }
  // dense on unflattened input is rejected
  CHECK_THROWS_AS(layer_output_shape(LayerSpec::dense("d", 3), {2, 2, 1}), ShapeError);
}

TEST_CASE("forward kernels match a brute-force conv oracle") {
  // brute force: independent triple-loop dot product, no pointer tricks
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int it = 0; it < 20; ++it) {
    const int h = 3 + static_cast<int>(rng() % 5);
    const int w = 3 + static_cast<int>(rng() % 5);
    const int cin = 1 + static_cast<int>(rng() % 3);
    const int f = 1 + static_cast<int>(rng() % 3);
    const int k = 1 + static_cast<int>(rng() % 2);
    const int stride = 1 + static_cast<int>(rng() % 2);
    Tensor3 in(h, w, cin);
    for (auto& v : in.data) v = u(rng);
    std::vector<Real> wts(static_cast<std::size_t>(k) * k * cin * f), b(f);
    for (auto& v : wts) v = u(rng);
    for (auto& v : b) v = u(rng);
    const auto out = conv2d_forward(in, wts, b, k, k, stride);
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox)
        for (int j = 0; j < f; ++j) {
          double acc = b[j];
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              for (int c = 0; c < cin; ++c)
                acc += in.at(oy * stride + ky, ox * stride + kx, c) *
                       wts[((static_cast<std::size_t>(ky) * k + kx) * cin + c) * f + j];
          CHECK(out.at(oy, ox, j) == doctest::Approx(acc).epsilon(1e-4));
        }
  }
}
