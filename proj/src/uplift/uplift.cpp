#include "o2o/uplift/uplift.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"
#include "o2o/common/parallel.hpp"
#include "o2o/common/stats.hpp"
#include "o2o/common/svg.hpp"

namespace o2o::uplift {

namespace {

constexpr const char* kModelTag = "o2o-uplift";
constexpr int kModelVersion = 1;

std::mt19937_64 seeded(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& x, std::span<const std::size_t> cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

struct CurvePoints {
  std::vector<double> f;
  std::vector<bool> interpolated;
};

// Success-rate curve for one ordering of the units.
CurvePoints curve_for_order(std::span<const std::size_t> order, std::span<const int> t, std::span<const int> r,
                            int grid_points) {
  const std::size_t n = order.size();
  std::vector<long long> cum_t(n + 1, 0), cum_tr(n + 1, 0), cum_c(n + 1, 0), cum_cr(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = order[i];
    cum_t[i + 1] = cum_t[i] + t[u];
    cum_tr[i + 1] = cum_tr[i] + (t[u] ? r[u] : 0);
    cum_c[i + 1] = cum_c[i] + (t[u] ? 0 : 1);
    cum_cr[i + 1] = cum_cr[i] + (t[u] ? 0 : r[u]);
  }
  CurvePoints out;
  out.f.resize(static_cast<std::size_t>(grid_points));
  out.interpolated.assign(static_cast<std::size_t>(grid_points), false);
  for (int j = 0; j < grid_points; ++j) {
    const double k = static_cast<double>(j) / (grid_points - 1);
    const auto m = static_cast<std::size_t>(std::llround(k * static_cast<double>(n)));
    const double w = static_cast<double>(m) / static_cast<double>(n);
    bool valid = true;
    double top = 0.0, bottom = 0.0;
    if (m > 0) {
      if (cum_t[m] == 0) valid = false;
      else top = static_cast<double>(cum_tr[m]) / static_cast<double>(cum_t[m]);
    }
    if (m < n) {
      const long long controls = cum_c[n] - cum_c[m];
      if (controls == 0) valid = false;
      else bottom = static_cast<double>(cum_cr[n] - cum_cr[m]) / static_cast<double>(controls);
    }
    out.f[static_cast<std::size_t>(j)] = w * top + (1.0 - w) * bottom;
    out.interpolated[static_cast<std::size_t>(j)] = !valid;
  }
  // Both endpoints are valid whenever each arm is non-empty.
  for (std::size_t j = 1; j + 1 < out.f.size(); ++j) {
    if (!out.interpolated[j]) continue;
    std::size_t lo = j - 1, hi = j + 1;
    while (out.interpolated[hi]) ++hi;
    const double span = static_cast<double>(hi - lo);
    out.f[j] = out.f[lo] + (out.f[hi] - out.f[lo]) * static_cast<double>(j - lo) / span;
  }
  return out;
}

double trapezoid(std::span<const double> k, std::span<const double> f1, std::span<const double> f0) {
  double area = 0.0;
  for (std::size_t j = 0; j + 1 < k.size(); ++j) {
    area += (k[j + 1] - k[j]) * ((f1[j] - f0[j]) + (f1[j + 1] - f0[j + 1])) / 2.0;
  }
  return area;
}

std::string mask_key(std::span<const std::size_t> features) {
  std::string key;
  for (auto f : features) key += std::to_string(f) + ',';
  return key;
}

}  // namespace

int z_transform(int treated, int revisit) {
  if ((treated != 0 && treated != 1) || (revisit != 0 && revisit != 1)) {
    throw PreconditionError(fmt::format("treatment and revisit must be 0/1, got ({}, {})", treated, revisit));
  }
  return treated == revisit ? 1 : 0;
}

void UpliftDataset::compute_z() {
  if (t.size() != revisit.size()) throw PreconditionError("treatment and revisit vectors differ in length");
  z.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) z[i] = z_transform(t[i], revisit[i]);
}

void UpliftDataset::validate() const {
  const auto n = t.size();
  if (revisit.size() != n || z.size() != n || static_cast<std::size_t>(x.rows()) != n ||
      (!ids.empty() && ids.size() != n)) {
    throw PreconditionError("uplift dataset columns differ in length");
  }
  if (feature_names.size() != static_cast<std::size_t>(x.cols())) {
    throw PreconditionError("uplift dataset needs one name per feature column");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (z[i] != z_transform(t[i], revisit[i])) throw PreconditionError("uplift dataset label Z is inconsistent");
  }
  if (!x.allFinite()) throw PreconditionError("uplift features contain missing or non-finite values");
}

UpliftDataset UpliftDataset::subset(std::span<const std::size_t> rows) const {
  UpliftDataset out;
  out.feature_names = feature_names;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    if (!ids.empty()) out.ids.push_back(ids[rows[i]]);
    out.t.push_back(t[rows[i]]);
    out.revisit.push_back(revisit[rows[i]]);
    out.z.push_back(z[rows[i]]);
  }
  return out;
}

double UpliftDataset::treatment_share() const {
  if (t.empty()) return 0.0;
  return static_cast<double>(std::accumulate(t.begin(), t.end(), 0LL)) / static_cast<double>(t.size());
}

Split three_way_split(std::size_t n, std::uint64_t seed, double selection_share, double train_share) {
  if (selection_share < 0 || train_share < 0 || selection_share + train_share > 1.0) {
    throw PreconditionError("split shares must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = seeded({seed, 0x5b1170});
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto a = static_cast<std::size_t>(std::llround(selection_share * static_cast<double>(n)));
  const auto b = std::min(n, a + static_cast<std::size_t>(std::llround(train_share * static_cast<double>(n))));
  Split s;
  s.selection.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(a), idx.begin() + static_cast<std::ptrdiff_t>(b));
  s.evaluation.assign(idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end());
  for (auto* part : {&s.selection, &s.train, &s.evaluation}) std::sort(part->begin(), part->end());
  return s;
}

UpliftModel fit_base_learner(const UpliftDataset& data, const GbdtParams& params,
                             std::span<const std::size_t> features) {
  data.validate();
  const auto n = data.size();
  const auto positives = std::accumulate(data.z.begin(), data.z.end(), 0LL);
  if (positives == 0 || static_cast<std::size_t>(positives) == n) {
    throw PreconditionError("uplift training data contains a single Z class");
  }
  const double share = data.treatment_share();
  if (share < kMinTreatmentShare || share > kMaxTreatmentShare) {
    throw PreconditionError(fmt::format(
        "treatment share {:.3f} outside [{}, {}]: the class-variable transformation assumes balanced random "
        "assignment",
        share, kMinTreatmentShare, kMaxTreatmentShare));
  }
  UpliftModel model;
  model.input_width = static_cast<std::size_t>(data.x.cols());
  if (features.empty()) {
    model.features.resize(model.input_width);
    std::iota(model.features.begin(), model.features.end(), 0);
  } else {
    model.features.assign(features.begin(), features.end());
  }
  for (auto f : model.features) {
    if (f >= model.input_width) throw PreconditionError(fmt::format("feature index {} out of range", f));
    model.feature_names.push_back(data.feature_names[f]);
  }
  model.n_train = n;
  model.treatment_share = share;
  model.learner = GbdtClassifier(params);
  model.learner.fit(columns(data.x, model.features), data.z);
  return model;
}

Eigen::VectorXd predict_proba(const UpliftModel& model, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_width) {
    throw PreconditionError(
        fmt::format("feature dimension mismatch: model expects {} columns, got {}", model.input_width, x.cols()));
  }
  return model.learner.predict_proba(columns(x, model.features));
}

Eigen::VectorXd predict_tau(const UpliftModel& model, const Eigen::MatrixXd& x) {
  return predict_proba(model, x).unaryExpr([](double p) { return tau_from_probability(p); });
}

UpliftCurve uplift_curve(std::span<const double> tau, std::span<const int> t, std::span<const int> revisit,
                         std::uint64_t seed, int grid_points) {
  const std::size_t n = tau.size();
  if (t.size() != n || revisit.size() != n) throw PreconditionError("uplift curve inputs differ in length");
  if (grid_points < 2) throw PreconditionError("uplift curve needs at least two grid points");
  const auto treated = std::accumulate(t.begin(), t.end(), 0LL);
  if (treated == 0 || static_cast<std::size_t>(treated) == n) {
    throw PreconditionError("uplift curve needs both treated and control units");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tau[a] > tau[b]; });
  const auto model = curve_for_order(order, t, revisit, grid_points);

  UpliftCurve c;
  c.k.resize(static_cast<std::size_t>(grid_points));
  for (int j = 0; j < grid_points; ++j) c.k[static_cast<std::size_t>(j)] = static_cast<double>(j) / (grid_points - 1);
  c.f1 = model.f;
  c.interpolated = model.interpolated;
  c.f0.assign(c.k.size(), 0.0);
  for (int s = 0; s < kRandomShuffles; ++s) {
    std::iota(order.begin(), order.end(), 0);
    auto rng = seeded({seed, static_cast<std::uint64_t>(s)});
    std::shuffle(order.begin(), order.end(), rng);
    const auto random = curve_for_order(order, t, revisit, grid_points);
    for (std::size_t j = 0; j < c.f0.size(); ++j) c.f0[j] += random.f[j] / kRandomShuffles;
  }
  // Both orderings share the endpoints exactly.
  c.f0.front() = c.f1.front();
  c.f0.back() = c.f1.back();
  c.auuc = trapezoid(c.k, c.f1, c.f0);
  return c;
}

SelectionResult select_features(const UpliftDataset& data, std::span<const std::size_t> rows, int budget,
                                std::uint64_t seed, const GbdtParams& params) {
  const auto p = static_cast<std::size_t>(data.x.cols());
  if (p < 2) throw PreconditionError("feature selection needs at least two candidate features");
  if (budget < 10) throw PreconditionError(fmt::format("feature selection budget must be at least 10, got {}", budget));
  if (rows.size() < 4) throw PreconditionError("feature selection needs rows to split into fit and validation halves");

  std::vector<std::size_t> shuffled(rows.begin(), rows.end());
  auto split_rng = seeded({seed, 0xfea7});
  std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
  const std::size_t half = shuffled.size() / 2;
  std::vector<std::size_t> fit_rows(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::size_t> val_rows(shuffled.begin() + static_cast<std::ptrdiff_t>(half), shuffled.end());
  std::sort(fit_rows.begin(), fit_rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  const auto fit_data = data.subset(fit_rows);
  const auto val_data = data.subset(val_rows);

  SelectionResult result;
  std::map<std::string, std::size_t> first_trial;
  std::vector<std::size_t> unique_trials;
  for (int trial = 0; trial < budget; ++trial) {
    auto rng = seeded({seed, static_cast<std::uint64_t>(trial) + 1});
    std::bernoulli_distribution include(0.5);
    SelectionTrial st;
    st.trial = trial;
    for (std::size_t f = 0; f < p; ++f) {
      if (include(rng)) st.features.push_back(f);
    }
    if (st.features.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, p - 1);
      st.features.push_back(pick(rng));
    }
    const auto key = mask_key(st.features);
    const auto [it, fresh] = first_trial.emplace(key, result.trace.size());
    st.cached = !fresh;
    if (fresh) unique_trials.push_back(result.trace.size());
    result.trace.push_back(std::move(st));
  }

  std::vector<double> scores(unique_trials.size());
  parallel_for(unique_trials.size(), [&](std::size_t u) {
    const auto& st = result.trace[unique_trials[u]];
    const auto model = fit_base_learner(fit_data, params, st.features);
    const Eigen::VectorXd tau = predict_tau(model, val_data.x);
    scores[u] = uplift_curve({tau.data(), static_cast<std::size_t>(tau.size())}, val_data.t, val_data.revisit, seed)
                    .auuc;
  });
  for (std::size_t u = 0; u < unique_trials.size(); ++u) result.trace[unique_trials[u]].auuc = scores[u];
  for (auto& st : result.trace) {
    if (st.cached) st.auuc = result.trace[first_trial.at(mask_key(st.features))].auuc;
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    if (result.trace[i].auuc > result.trace[best].auuc) best = i;
  }
  result.features = result.trace[best].features;
  result.auuc = result.trace[best].auuc;
  return result;
}

std::vector<FeatureImportance> permutation_importance(const UpliftModel& model, const UpliftDataset& eval,
                                                      int repeats, std::uint64_t seed) {
  eval.validate();
  if (repeats < 1) throw PreconditionError("permutation importance needs at least one repeat");
  const Eigen::VectorXd tau = predict_tau(model, eval.x);
  auto auuc_of = [&](const Eigen::VectorXd& v) {
    return uplift_curve({v.data(), static_cast<std::size_t>(v.size())}, eval.t, eval.revisit, seed).auuc;
  };
  const double base = auuc_of(tau);
  const std::vector<double> tau_vec(tau.data(), tau.data() + tau.size());

  std::vector<FeatureImportance> out(static_cast<std::size_t>(eval.x.cols()));
  for (std::size_t c = 0; c < out.size(); ++c) {
    auto& fi = out[c];
    fi.column = c;
    fi.name = eval.feature_names[c];
    const Eigen::VectorXd col = eval.x.col(static_cast<Eigen::Index>(c));
    fi.sign = stats::correlation(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), tau_vec);
    fi.selected = std::find(model.features.begin(), model.features.end(), c) != model.features.end();
  }

  std::vector<std::size_t> selected;
  for (const auto& fi : out) {
    if (fi.selected) selected.push_back(fi.column);
  }
  parallel_for(selected.size(), [&](std::size_t s) {
    const std::size_t c = selected[s];
    Eigen::MatrixXd x = eval.x;
    std::vector<double> drops;
    for (int r = 0; r < repeats; ++r) {
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
      std::iota(perm.begin(), perm.end(), 0);
      auto rng = seeded({seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(r)});
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, static_cast<Eigen::Index>(c)) = eval.x(perm[static_cast<std::size_t>(i)], static_cast<Eigen::Index>(c));
      }
      drops.push_back(base - auuc_of(predict_tau(model, x)));
    }
    out[c].importance = stats::mean(drops);
    out[c].std_err = stats::stddev(drops) / std::sqrt(static_cast<double>(repeats));
  });
  return out;
}

void UpliftModel::save(std::ostream& out) const {
  out << kModelTag << ' ' << kModelVersion << '\n';
  out << "input_width " << input_width << '\n';
  out << "n_train " << n_train << '\n';
  out << fmt::format("treatment_share {:.17g}\n", treatment_share);
  out << "features " << features.size() << '\n';
  for (std::size_t i = 0; i < features.size(); ++i) out << features[i] << ' ' << feature_names[i] << '\n';
  learner.save(out);
}

UpliftModel UpliftModel::load(std::istream& in) {
  std::string tag, word;
  int version = 0;
  if (!(in >> tag >> version) || tag != kModelTag) throw InputError("not an uplift model file");
  if (version != kModelVersion) {
    throw InputError(fmt::format("unsupported uplift model version {} (expected {})", version, kModelVersion));
  }
  UpliftModel m;
  std::size_t count = 0;
  in >> word >> m.input_width >> word >> m.n_train >> word >> m.treatment_share >> word >> count;
  if (!in || word != "features") throw InputError("malformed uplift model header");
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t f = 0;
    std::string name;
    in >> f >> name;
    m.features.push_back(f);
    m.feature_names.push_back(name);
  }
  if (!in) throw InputError("malformed uplift model feature list");
  m.learner = GbdtClassifier::load(in);
  if (static_cast<std::size_t>(m.learner.n_features()) != m.features.size()) {
    throw InputError("uplift model feature list does not match its learner");
  }
  return m;
}

void write_curve(std::ostream& out, const UpliftCurve& curve) {
  csv::Writer w(out);
  w.row({"k", "f1", "f0", "difference", "interpolated"});
  for (std::size_t j = 0; j < curve.k.size(); ++j) {
    w.row({csv::num(curve.k[j]), csv::num(curve.f1[j]), csv::num(curve.f0[j]), csv::num(curve.f1[j] - curve.f0[j]),
           curve.interpolated[j] ? "1" : "0"});
  }
}

void write_importance(std::ostream& out, std::span<const FeatureImportance> importance) {
  csv::Writer w(out);
  w.row({"column", "feature", "selected", "importance", "std_err", "sign"});
  for (const auto& fi : importance) {
    w.row({std::to_string(fi.column), fi.name, fi.selected ? "1" : "0", csv::num(fi.importance),
           csv::num(fi.std_err), csv::num(fi.sign)});
  }
}

std::string curve_svg(const UpliftCurve& curve) {
  double lo = 1.0, hi = 0.0;
  for (std::size_t j = 0; j < curve.k.size(); ++j) {
    lo = std::min({lo, curve.f1[j], curve.f0[j]});
    hi = std::max({hi, curve.f1[j], curve.f0[j]});
  }
  const double pad = std::max(0.01, 0.05 * (hi - lo));
  svg::Plot plot(0.0, 1.0, lo - pad, hi + pad);
  plot.title(fmt::format("Cumulative success rate (AUUC {:.4f})", curve.auuc));
  plot.axis_labels("fraction targeted k", "success rate");
  plot.polyline(curve.k, curve.f1, "#c53030");
  plot.polyline(curve.k, curve.f0, "#2b6cb0", 2.0, true);
  plot.legend({{"model ranking", "#c53030"}, {"random ranking", "#2b6cb0"}});
  return plot.str();
}

std::string importance_svg(std::span<const FeatureImportance> importance, std::size_t top) {
  std::vector<FeatureImportance> rows(importance.begin(), importance.end());
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.importance > b.importance; });
  rows.resize(std::min(rows.size(), top));
  double hi = 1e-6, lo = 0.0;
  for (const auto& r : rows) {
    hi = std::max(hi, r.importance);
    lo = std::min(lo, r.importance);
  }
  const double n = static_cast<double>(rows.size());
  const double span = hi - lo;
  svg::Plot plot(lo - 0.6 * span, hi + 0.05 * span, 0.0, n + 0.5, 640, std::max(240, 22 * static_cast<int>(rows.size()) + 100));
  plot.title("Permutation importance (AUUC drop)");
  plot.axis_labels("importance", "");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double y = n - static_cast<double>(i) - 0.5;
    const auto color = rows[i].sign >= 0 ? "#c53030" : "#2b6cb0";
    plot.rect(0.0, y - 0.35, rows[i].importance, y + 0.35, color);
    plot.text(lo - 0.58 * span, y, rows[i].name, 10);
  }
  plot.legend({{"raises uplift", "#c53030"}, {"lowers uplift", "#2b6cb0"}});
  return plot.str();
}

}  // namespace o2o::uplift
