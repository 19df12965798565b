#include "quickloc/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "quickloc/error.hpp"

namespace quickloc {

namespace {

double clamp_dbm(double v) { return std::min(0.0, std::max(kMissingRssiDbm, v)); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_num(const std::string& cell, std::size_t row, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("row " + std::to_string(row) + ": non-numeric value '" + cell +
                     "' in column " + col);
  }
}

}  // namespace

int normalize_rssi(double dbm) {
  if (!std::isfinite(dbm))
    throw InvalidArgument("normalize_rssi: non-finite RSSI value");
  const double c = clamp_dbm(dbm);
  return static_cast<int>(std::lround(255.0 * (c + 100.0) / 100.0));
}

int image_side_for(std::size_t n) {
  int s = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  while (static_cast<std::size_t>(s) * s < n) ++s;  // guard fp edge cases
  return s;
}

FingerprintImage encode_image(const RssiVector& v) {
  if (v.empty()) throw InvalidArgument("encode_image: empty RSSI vector");
  FingerprintImage img;
  img.side = image_side_for(v.size());
  img.pixels.assign(static_cast<std::size_t>(img.side) * img.side, 0);
  for (std::size_t i = 0; i < v.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(normalize_rssi(v[i]));
  return img;
}

Tensor3 image_to_tensor(const FingerprintImage& img) {
  Tensor3 t(img.side, img.side, 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    t.data[i] = static_cast<Real>(img.pixels[i]) / 255.0f;
  return t;
}

Tensor3 rssi_to_tensor(const RssiVector& v) { return image_to_tensor(encode_image(v)); }

LabeledDataset load_native(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  auto header = split_csv_line(line);
  if (header.size() < 4 || strip(header[0]) != "label" || strip(header[1]) != "x" ||
      strip(header[2]) != "y")
    throw ParseError(path + ": header must start with label,x,y followed by WAP columns");

  LabeledDataset ds;
  std::set<std::string> seen;
  for (std::size_t i = 3; i < header.size(); ++i) {
    const std::string name = strip(header[i]);
    if (name.rfind("WAP", 0) != 0)
      throw ParseError(path + ": unexpected column '" + name + "' in WAP region");
    if (!seen.insert(name).second)
      throw ParseError(path + ": duplicate WAP column '" + name + "'");
    ds.wap_index.push_back(name);
  }

  std::map<int, std::array<double, 2>> coord_of;
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (strip(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    const int label = static_cast<int>(parse_num(strip(cells[0]), row, "label"));
    if (label < 0) throw ParseError("row " + std::to_string(row) + ": negative label");
    const double x = parse_num(strip(cells[1]), row, "x");
    const double y = parse_num(strip(cells[2]), row, "y");
    RssiVector v(ds.wap_index.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string cell = strip(cells[3 + i]);
      v[i] = cell.empty() ? static_cast<float>(kMissingRssiDbm)
                          : static_cast<float>(
                                clamp_dbm(parse_num(cell, row, ds.wap_index[i])));
    }
    ds.rssi.push_back(std::move(v));
    ds.labels.push_back(label);
    coord_of.emplace(label, std::array<double, 2>{x, y});  // first row wins
  }
  if (ds.labels.empty()) throw ParseError(path + ": no data rows");
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.coords.assign(ds.num_classes, {0.0, 0.0});
  for (const auto& [label, xy] : coord_of)
    if (label < ds.num_classes) ds.coords[label] = xy;
  return ds;
}

void save_native(const LabeledDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path);
  f << "label,x,y";
  for (const auto& w : ds.wap_index) f << ',' << w;
  f << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int label = ds.labels[i];
    const auto xy = ds.has_coords() ? ds.coords[label] : std::array<double, 2>{0, 0};
    f << label << ',' << xy[0] << ',' << xy[1];
    for (float v : ds.rssi[i]) {
      f << ',';
      if (v > kMissingRssiDbm) f << v;  // blank cell = not observed
    }
    f << '\n';
  }
}

LabeledDataset load_ujindoorloc(const std::string& path) {
  static const std::set<std::string> kMeta = {
      "LONGITUDE", "LATITUDE",         "FLOOR",  "BUILDINGID", "SPACEID",
      "RELATIVEPOSITION", "USERID", "PHONEID",    "TIMESTAMP"};
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  auto header = split_csv_line(line);

  LabeledDataset ds;
  std::vector<std::size_t> wap_cols;
  std::size_t floor_col = SIZE_MAX, building_col = SIZE_MAX;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = strip(header[i]);
    if (name.rfind("WAP", 0) == 0) {
      wap_cols.push_back(i);
      ds.wap_index.push_back(name);
    } else if (kMeta.count(name)) {
      if (name == "FLOOR") floor_col = i;
      if (name == "BUILDINGID") building_col = i;
    } else {
      throw ParseError(path + ": unknown column '" + name + "'");
    }
  }
  if (ds.wap_index.empty() || floor_col == SIZE_MAX || building_col == SIZE_MAX)
    throw ParseError(path + ": need WAP columns plus FLOOR and BUILDINGID");

  std::vector<std::pair<int, int>> bf;  // per-row (building, floor)
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (strip(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    RssiVector v(wap_cols.size());
    for (std::size_t i = 0; i < wap_cols.size(); ++i) {
      const double raw = parse_num(strip(cells[wap_cols[i]]), row, ds.wap_index[i]);
      // +100 is the dataset's "not detected" sentinel
      v[i] = static_cast<float>(raw >= 100.0 ? kMissingRssiDbm : clamp_dbm(raw));
    }
    const int building =
        static_cast<int>(parse_num(strip(cells[building_col]), row, "BUILDINGID"));
    const int floor = static_cast<int>(parse_num(strip(cells[floor_col]), row, "FLOOR"));
    ds.rssi.push_back(std::move(v));
    bf.emplace_back(building, floor);
  }
  if (bf.empty()) throw ParseError(path + ": no data rows");

  // building-major class index over the distinct (building, floor) pairs
  std::set<std::pair<int, int>> distinct(bf.begin(), bf.end());
  std::map<std::pair<int, int>, int> cls;
  for (const auto& key : distinct) cls.emplace(key, static_cast<int>(cls.size()));
  ds.labels.reserve(bf.size());
  for (const auto& key : bf) ds.labels.push_back(cls.at(key));
  ds.num_classes = static_cast<int>(cls.size());
  return ds;
}

LabeledDataset synth_generate(const SynthParams& p) {
  if (p.classes < 2) throw InvalidArgument("synth: need at least 2 classes");
  if (p.waps < p.classes) throw InvalidArgument("synth: need waps >= classes");
  if (p.samples_per_class < 1) throw InvalidArgument("synth: need samples per class");
  if (p.easy_fraction < 0.0 || p.easy_fraction > 1.0)
    throw InvalidArgument("synth: easy_fraction must be within [0, 1]");
  if (p.noise_db < 0.0) throw InvalidArgument("synth: negative noise");

  std::mt19937 rng(p.seed);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, p.noise_db);

  const int n_easy =
      std::min(p.classes, static_cast<int>(std::lround(p.easy_fraction * p.classes)));

  // Easy classes own a disjoint set of strong WAPs; the rest of the vector is
  // weak. Hard classes come in pairs that share a template and differ by a
  // small two-WAP offset comparable to the noise floor.
  std::vector<std::vector<double>> tpl(p.classes, std::vector<double>(p.waps));
  auto fill_base = [&](int owner, std::vector<double>& t) {
    for (int w = 0; w < p.waps; ++w) {
      const bool hot = (w % p.classes) == owner;
      t[w] = clamp_dbm((hot ? -30.0 : -90.0) + jitter(rng));
    }
  };
  for (int c = 0; c < n_easy; ++c) fill_base(c, tpl[c]);
  const double delta = std::max(1.0, 1.5 * p.noise_db);
  for (int c = n_easy; c < p.classes; ++c) {
    const int leader = n_easy + 2 * ((c - n_easy) / 2);
    if (c == leader) {
      fill_base(c, tpl[c]);
    } else {
      tpl[c] = tpl[leader];
      tpl[c][c % p.waps] = clamp_dbm(tpl[c][c % p.waps] + delta);
      tpl[c][(c + 1) % p.waps] = clamp_dbm(tpl[c][(c + 1) % p.waps] - delta);
    }
  }

  LabeledDataset ds;
  ds.wap_index.reserve(p.waps);
  for (int w = 0; w < p.waps; ++w) {
    char name[16];
    std::snprintf(name, sizeof(name), "WAP_%03d", w);
    ds.wap_index.emplace_back(name);
  }
  for (int c = 0; c < p.classes; ++c) {
    for (int s = 0; s < p.samples_per_class; ++s) {
      RssiVector v(p.waps);
      for (int w = 0; w < p.waps; ++w)
        v[w] = static_cast<float>(
            p.noise_db == 0.0 ? tpl[c][w] : clamp_dbm(tpl[c][w] + noise(rng)));
      ds.rssi.push_back(std::move(v));
      ds.labels.push_back(c);
    }
    ds.coords.push_back({static_cast<double>(c), 0.0});  // 1 m apart on a line
  }
  ds.num_classes = p.classes;
  return ds;
}

SplitResult split(const LabeledDataset& ds, double f_train, double f_calib,
                  double f_test, std::uint32_t seed) {
  if (std::abs(f_train + f_calib + f_test - 1.0) > 1e-9)
    throw InvalidArgument("split: fractions must sum to 1");
  if (f_train < 0 || f_calib < 0 || f_test < 0)
    throw InvalidArgument("split: negative fraction");

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  SplitResult r;
  for (LabeledDataset* part : {&r.train, &r.calib, &r.test}) {
    part->wap_index = ds.wap_index;
    part->num_classes = ds.num_classes;
    part->coords = ds.coords;
  }
  r.train.split_tag = "train";
  r.calib.split_tag = "calibration";
  r.test.split_tag = "test";

  std::mt19937 rng(seed);
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = idx.size();
    std::size_t n_train = static_cast<std::size_t>(std::lround(f_train * n));
    std::size_t n_calib = static_cast<std::size_t>(std::lround(f_calib * n));
    n_train = std::min(n_train, n);
    n_calib = std::min(n_calib, n - n_train);
    for (std::size_t k = 0; k < n; ++k) {
      LabeledDataset* dst =
          k < n_train ? &r.train : (k < n_train + n_calib ? &r.calib : &r.test);
      dst->rssi.push_back(ds.rssi[idx[k]]);
      dst->labels.push_back(ds.labels[idx[k]]);
    }
  }
  return r;
}

double mean_localization_error(const std::vector<int>& predicted,
                               const std::vector<int>& truth,
                               const std::vector<std::array<double, 2>>& coords) {
  if (predicted.size() != truth.size())
    throw InvalidArgument("mean_localization_error: size mismatch");
  if (predicted.empty()) throw InvalidArgument("mean_localization_error: no samples");
  double sum = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int a = predicted[i], b = truth[i];
    if (a < 0 || b < 0 || a >= static_cast<int>(coords.size()) ||
        b >= static_cast<int>(coords.size()))
      throw InvalidArgument("mean_localization_error: label " +
                            std::to_string(a < 0 || a >= (int)coords.size() ? a : b) +
                            " has no coordinates");
    const double dx = coords[a][0] - coords[b][0];
    const double dy = coords[a][1] - coords[b][1];
    sum += std::sqrt(dx * dx + dy * dy);
  }
  return sum / static_cast<double>(predicted.size());
}

double top1_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    throw InvalidArgument("top1_accuracy: size mismatch");
  if (predicted.empty()) throw InvalidArgument("top1_accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace quickloc
