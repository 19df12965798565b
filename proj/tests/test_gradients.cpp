#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "quickloc/net.hpp"

using namespace quickloc;

// Central finite differences on a double-precision instantiation of the same
// kernels. The oracle never touches the reverse-mode path: it only calls the
// forward stack.
namespace {

using DTensor = Tensor3T<double>;
using DStore = WeightStoreT<double>;

double loss_of(const std::vector<LayerSpec>& layers, const DStore& weights,
               const DTensor& input, int cls) {
  return cross_entropy_loss(forward_stack(layers, weights, input).data, cls);
}

struct FdReport {
  double max_rel = 0.0;
  int checked = 0;
};

FdReport fd_check(const std::vector<LayerSpec>& layers, DStore weights,
                  const DTensor& input, int cls, double h = 1e-4) {
  const auto grads = backward(layers, weights, input, cls);
  FdReport rep;
  for (auto& [name, blk] : weights.blocks) {
    const auto* g = grads.find(name);
    REQUIRE(g != nullptr);
    auto probe = [&](std::vector<double>& vals, const std::vector<double>& gvals) {
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + h;
        const double up = loss_of(layers, weights, input, cls);
        vals[i] = keep - h;
        const double dn = loss_of(layers, weights, input, cls);
        vals[i] = keep;
        const double fd = (up - dn) / (2 * h);
        const double a = gvals[i];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
        rep.max_rel = std::max(rep.max_rel, rel);
        ++rep.checked;
      }
    };
    probe(blk.w, g->w);
    probe(blk.b, g->b);
  }
  return rep;
}

DTensor random_input(Shape3 s, std::mt19937& rng) {
  DTensor t(s);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : t.data) v = u(rng);
  return t;
}

DStore init_stack(const std::vector<LayerSpec>& layers, Shape3 in, std::mt19937& rng) {
  DStore store;
  Shape3 s = in;
  for (const auto& l : layers) {
    if (l.trainable()) store.add(l.name) = init_layer_block<double>(l, s, rng);
    s = layer_output_shape(l, s);
  }
  return store;
}

}  // namespace

TEST_CASE("single dense layer matches finite differences") {
  std::mt19937 rng(101);
  std::vector<LayerSpec> layers = {LayerSpec::dense("d", 4), LayerSpec::softmax()};
  const Shape3 in{1, 1, 6};
  auto weights = init_stack(layers, in, rng);
  const auto rep = fd_check(layers, weights, random_input(in, rng), 2);
  CHECK(rep.checked == 6 * 4 + 4);
  CHECK(rep.max_rel <= 1e-4);
}

TEST_CASE("every layer kind passes the finite-difference oracle") {
  std::mt19937 rng(202);

  SUBCASE("conv + relu + dense") {
    std::vector<LayerSpec> layers = {LayerSpec::conv2d("c", 2, 3), LayerSpec::relu(),
                                     LayerSpec::flatten(), LayerSpec::dense("d", 3),
                                     LayerSpec::softmax()};
    const Shape3 in{5, 5, 2};
    auto w = init_stack(layers, in, rng);
    CHECK(fd_check(layers, w, random_input(in, rng), 1).max_rel <= 1e-4);
  }
  SUBCASE("depthwise") {
    std::vector<LayerSpec> layers = {LayerSpec::depthwise("dw", 2), LayerSpec::relu(),
                                     LayerSpec::flatten(), LayerSpec::dense("d", 3),
                                     LayerSpec::softmax()};
    const Shape3 in{4, 4, 3};
    auto w = init_stack(layers, in, rng);
    CHECK(fd_check(layers, w, random_input(in, rng), 0).max_rel <= 1e-4);
  }
  SUBCASE("pointwise") {
    std::vector<LayerSpec> layers = {LayerSpec::pointwise("pw", 4), LayerSpec::relu(),
                                     LayerSpec::flatten(), LayerSpec::dense("d", 3),
                                     LayerSpec::softmax()};
    const Shape3 in{3, 3, 2};
    auto w = init_stack(layers, in, rng);
    CHECK(fd_check(layers, w, random_input(in, rng), 2).max_rel <= 1e-4);
  }
  SUBCASE("maxpool") {
    std::vector<LayerSpec> layers = {LayerSpec::conv2d("c", 2, 2), LayerSpec::relu(),
                                     LayerSpec::maxpool(2, 2), LayerSpec::flatten(),
                                     LayerSpec::dense("d", 3), LayerSpec::softmax()};
    const Shape3 in{6, 6, 1};
    auto w = init_stack(layers, in, rng);
    CHECK(fd_check(layers, w, random_input(in, rng), 1).max_rel <= 1e-4);
  }
  SUBCASE("stride 2 conv") {
    std::vector<LayerSpec> layers = {
        LayerSpec{LayerKind::Conv2d, "c", 3, 3, 2, 2}, LayerSpec::relu(),
        LayerSpec::flatten(), LayerSpec::dense("d", 2), LayerSpec::softmax()};
    const Shape3 in{7, 7, 1};
    auto w = init_stack(layers, in, rng);
    CHECK(fd_check(layers, w, random_input(in, rng), 0).max_rel <= 1e-4);
  }
}

TEST_CASE("random small networks, five seeds") {
  for (unsigned seed : {11u, 22u, 33u, 44u, 55u}) {
    std::mt19937 rng(seed);
    std::vector<LayerSpec> layers = {LayerSpec::conv2d("c", 2, 2), LayerSpec::relu(),
                                     LayerSpec::flatten(), LayerSpec::dense("d", 4),
                                     LayerSpec::softmax()};
    const Shape3 in{4 + static_cast<int>(rng() % 3), 4 + static_cast<int>(rng() % 3),
                    1 + static_cast<int>(rng() % 2)};
    auto w = init_stack(layers, in, rng);
    // stays within the small-network budget
    std::int64_t params = 0;
    Shape3 s = in;
    for (const auto& l : layers) {
      params += layer_param_count(l, s);
      s = layer_output_shape(l, s);
    }
    CHECK(params <= 200);
    const auto rep =
        fd_check(layers, w, random_input(in, rng), static_cast<int>(rng() % 4));
    CHECK(rep.max_rel <= 1e-4);
  }
}

TEST_CASE("sgd step contract") {
  std::mt19937 rng(303);
  std::vector<LayerSpec> layers = {LayerSpec::dense("d", 3), LayerSpec::softmax()};
  const Shape3 in{1, 1, 4};

  WeightStore weights;
  weights.add("d") = init_layer_block<Real>(layers[0], in, rng);

  Tensor3 x(1, 1, 4);
  for (auto& v : x.data) v = 0.5f;
  const auto grads = backward(layers, weights, x, 1);

  SUBCASE("zero learning rate leaves weights bit-identical") {
    const auto before = weights.get("d").w;
    sgd_step(weights, grads, 0.0);
    CHECK(weights.get("d").w == before);
  }
  SUBCASE("w=1, g=2, lr=0.1 -> 0.8") {
    WeightStore ws;
    auto& blk = ws.add("p");
    blk.w = {1.f};
    GradientStore gs;
    auto& g = gs.add("p");
    g.w = {2.f};
    sgd_step(ws, gs, 0.1);
    CHECK(ws.get("p").w[0] == doctest::Approx(0.8f));
  }
  SUBCASE("frozen block untouched regardless of gradient") {
    weights.get("d").frozen = true;
    const auto before = weights.get("d").w;
    sgd_step(weights, grads, 0.5);
    CHECK(weights.get("d").w == before);
  }
}

TEST_CASE("backward requires a softmax-terminated stack") {
  std::vector<LayerSpec> layers = {LayerSpec::dense("d", 3)};
  WeightStore weights;
  std::mt19937 rng(1);
  weights.add("d") = init_layer_block<Real>(layers[0], {1, 1, 2}, rng);
  Tensor3 x(1, 1, 2);
  CHECK_THROWS_AS(backward(layers, weights, x, 0), InvalidArgument);
}
