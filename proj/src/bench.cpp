#include "quickloc/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace quickloc {

std::vector<double> theta_range(double start, double stop, double step) {
  if (step <= 0) throw InvalidArgument("theta_range: step must be > 0");
  if (start > stop) throw InvalidArgument("theta_range: empty range");
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double t = start + k * step;
    if (t > stop + 1e-9) break;
    grid.push_back(t);
  }
  return grid;
}

std::vector<CurvePoint> sweep_threshold(const MultiExitModel& m, const SweepSpec& spec,
                                        const LabeledDataset& ds) {
  if (spec.thetas.empty()) throw InvalidArgument("sweep_threshold: empty grid");
  if (spec.exits_enabled.size() != m.exits.size())
    throw InvalidArgument("sweep_threshold: exit mask size mismatch");
  std::vector<CurvePoint> points;
  points.reserve(spec.thetas.size());
  for (double theta : spec.thetas) {
    validate_theta(spec.method, theta);
    ExitPolicy policy(m.exits.size());
    for (std::size_t e = 0; e < policy.size(); ++e)
      policy[e] = {spec.exits_enabled[e], spec.method, theta};
    const EvalResult ev = evaluate_dataset(m, policy, ds);
    CurvePoint p;
    p.theta = theta;
    p.accuracy = ev.accuracy;
    p.error_m = ev.error_m;
    p.mean_macs = ev.mean_macs;
    p.mean_ns = ev.mean_ns;
    p.exit_rates = ev.exit_rates;
    p.final_rate = ev.final_rate;
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<DepthPoint> depth_study(const std::vector<int>& depths,
                                    const LabeledDataset& train,
                                    const LabeledDataset& eval,
                                    const TrainParams& tp, int input_side,
                                    int classes) {
  const int widths[3] = {32, 64, 128};
  std::vector<DepthPoint> points;
  for (int depth : depths) {
    if (depth < 1 || depth > 3)
      throw InvalidArgument("depth_study: depth must be 1..3");
    MultiExitModel m;
    m.input = {input_side, input_side, 1};
    m.classes = classes;
    m.seed = tp.seed;
    for (int d = 0; d < depth; ++d) {
      m.backbone.push_back(
          LayerSpec::conv2d("conv" + std::to_string(d + 1), 2, widths[d]));
      m.backbone.push_back(LayerSpec::relu());
    }
    m.final_head = {LayerSpec::flatten(), LayerSpec::dense("final_dense", classes),
                    LayerSpec::softmax()};
    std::mt19937 rng(tp.seed);
    Shape3 s = m.input;
    for (const auto& l : m.backbone) {
      if (l.trainable()) m.weights.add(l.name) = init_layer_block<Real>(l, s, rng);
      s = layer_output_shape(l, s);
    }
    m.weights.add("final_dense") =
        init_layer_block<Real>(m.final_head[1], {1, 1, (int)s.flat()}, rng);

    train_baseline(m, train, tp);
    const EvalResult ev = evaluate_dataset(m, all_disabled_policy(m), eval);
    DepthPoint p;
    p.depth = depth;
    p.accuracy = ev.accuracy;
    p.macs = model_costs(m).baseline();
    p.mean_ns = ev.mean_ns;
    points.push_back(p);
  }
  return points;
}

TimingStats time_inference(const MultiExitModel& m, const ExitPolicy& policy,
                           const LabeledDataset& ds, int repetitions, int warmup) {
  if (ds.size() == 0) throw InvalidArgument("time_inference: empty dataset");
  if (repetitions < 2)
    throw InvalidArgument("time_inference: need >= 2 repetitions for a CI");

  std::vector<Tensor3> xs;
  xs.reserve(ds.size());
  for (const auto& v : ds.rssi) xs.push_back(rssi_to_tensor(v));

  for (int i = 0; i < warmup; ++i) infer_with_exits(m, policy, xs[i % xs.size()]);

  std::vector<double> per_rep(repetitions);
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& x : xs) infer_with_exits(m, policy, x);
    const auto t1 = std::chrono::steady_clock::now();
    per_rep[r] =
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() /
        static_cast<double>(xs.size());
  }

  TimingStats stats;
  stats.repetitions = repetitions;
  double sum = 0;
  for (double v : per_rep) sum += v;
  stats.mean_ns = sum / repetitions;
  double ss = 0;
  for (double v : per_rep) ss += (v - stats.mean_ns) * (v - stats.mean_ns);
  const double sd = std::sqrt(ss / (repetitions - 1));
  stats.ci95_ns = 1.96 * sd / std::sqrt(static_cast<double>(repetitions));
  return stats;
}

void write_sweep_csv(const std::vector<CurvePoint>& points, UncertaintyMethod method,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path);
  const std::size_t exits = points.empty() ? 0 : points.front().exit_rates.size();
  f << "theta,method,accuracy,error_m,mean_macs,mean_ns";
  for (std::size_t e = 0; e < exits; ++e) f << ",exit" << (e + 1) << "_rate";
  f << "\n";
  f.precision(12);
  for (const auto& p : points) {
    f << p.theta << ',' << method_name(method) << ',' << p.accuracy << ',';
    if (std::isfinite(p.error_m)) f << p.error_m;
    f << ',' << p.mean_macs << ',' << p.mean_ns;
    for (double r : p.exit_rates) f << ',' << r;
    f << '\n';
  }
}

std::vector<CurvePoint> read_sweep_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  std::vector<CurvePoint> points;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 6) throw ParseError(path + ": short row");
    CurvePoint p;
    p.theta = std::stod(cells[0]);
    p.accuracy = std::stod(cells[2]);
    p.error_m = cells[3].empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : std::stod(cells[3]);
    p.mean_macs = std::stod(cells[4]);
    p.mean_ns = std::stod(cells[5]);
    for (std::size_t i = 6; i < cells.size(); ++i)
      p.exit_rates.push_back(std::stod(cells[i]));
    points.push_back(std::move(p));
  }
  return points;
}

void write_depth_csv(const std::vector<DepthPoint>& points, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path);
  f << "depth,accuracy,macs,mean_ns\n";
  f.precision(12);
  for (const auto& p : points)
    f << p.depth << ',' << p.accuracy << ',' << p.macs << ',' << p.mean_ns << '\n';
}

void write_timing_csv(const std::vector<std::pair<std::string, TimingStats>>& rows,
                      const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path);
  f << "policy,mean_ns,ci95_ns,n\n";
  f.precision(12);
  for (const auto& [name, s] : rows)
    f << name << ',' << s.mean_ns << ',' << s.ci95_ns << ',' << s.repetitions << '\n';
}

}  // namespace quickloc
