#include "life/eval.hpp"

#include "life/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace life {

void to_json(nlohmann::json& j, const SegScores& s) {
  j = {{"tpr", s.tpr}, {"fpr", s.fpr}, {"accuracy", s.accuracy}, {"dice", s.dice},
       {"tp", s.tp},   {"fp", s.fp},   {"tn", s.tn},             {"fn", s.fn}};
}

SegScores scores_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
  SegScores s{0, 0, 0, 0, tp, fp, tn, fn};
  const std::int64_t pos = tp + fn, neg = fp + tn, total = pos + neg;
  s.tpr = pos > 0 ? static_cast<double>(tp) / pos : 1.0;
  s.fpr = neg > 0 ? static_cast<double>(fp) / neg : 0.0;
  s.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 1.0;
  const std::int64_t denom = 2 * tp + fp + fn;
  s.dice = denom > 0 ? 2.0 * tp / denom : 1.0;
  return s;
}

namespace {

void require_same(const MaskVolume& pred, const MaskVolume& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("score: prediction and ground truth differ in dims");
}

SegScores count_range(const MaskVolume& pred, const MaskVolume& gt, Index begin, Index end) {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (Index i = begin; i < end; ++i) {
    const bool p = pred.data()[i] != 0, g = gt.data()[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  return scores_from_counts(tp, fp, tn, fn);
}

}  // namespace

SegScores score(const MaskVolume& pred, const MaskVolume& gt) {
  require_same(pred, gt);
  return count_range(pred, gt, 0, pred.size());
}

std::vector<SegScores> per_slice_scores(const MaskVolume& pred, const MaskVolume& gt) {
  require_same(pred, gt);
  std::vector<SegScores> out;
  out.reserve(static_cast<std::size_t>(pred.depth()));
  for (Index z = 0; z < pred.depth(); ++z) {
    out.push_back(count_range(pred, gt, z * pred.plane_size(), (z + 1) * pred.plane_size()));
  }
  return out;
}

void to_json(nlohmann::json& j, const SummaryStats& s) {
  j = {{"min", s.min}, {"q1", s.q1}, {"median", s.median}, {"q3", s.q3}, {"max", s.max}, {"mean", s.mean}};
}

SummaryStats summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  SummaryStats s;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  return s;
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names{"kmeans", "otsu", "frangi", "oof", "life", "lif", "celif"};
  return names;
}

ComparisonReport compare_methods(const Volume3D& vol, const MaskVolume& gt, const ComparisonOptions& options) {
  if (!vol.same_shape(gt)) throw std::invalid_argument("compare_methods: volume and ground truth differ in dims");
  if (options.methods.empty()) throw std::invalid_argument("compare_methods: no methods requested");
  bool need_lif = false;
  for (const auto& m : options.methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw std::invalid_argument("unknown method: " + m);
    }
    if (m == "life" && options.model == nullptr) {
      throw std::invalid_argument("method 'life' needs a model checkpoint");
    }
    need_lif = need_lif || m == "lif" || m == "celif";
  }

  const Volume3D input = normalize(vol);
  std::optional<LifVolumes> lif = options.lif;
  if (need_lif && !lif) lif = lif_volume(input, options.fusion, options.registration);

  ComparisonReport report;
  report.methods.resize(options.methods.size());
  parallel_for(options.methods.size(), [&](std::size_t i) {
    const std::string& m = options.methods[i];
    MethodResult& r = report.methods[i];
    r.method = m;
    BinaryMask mask;
    if (m == "kmeans") {
      mask = kmeans_binarize(input);
    } else if (m == "otsu") {
      mask = otsu(input, options.binarize.bins).mask;
    } else if (m == "frangi") {
      mask = binarize_pipeline(normalize(frangi(input, options.vesselness)), options.binarize);
      mask.provenance["vesselness"] = options.vesselness;
    } else if (m == "oof") {
      mask = binarize_pipeline(normalize(oof(input, options.vesselness)), options.binarize);
      mask.provenance["vesselness"] = options.vesselness;
    } else if (m == "life") {
      mask = binarize_pipeline(nn::infer_latent(*options.model, input), options.binarize);
      mask.provenance["model"] = options.model->config();
    } else if (m == "lif") {
      mask = binarize_pipeline(lif->lif, options.binarize);
      mask.provenance["fusion"] = options.fusion;
    } else {
      mask = binarize_pipeline(lif->ce_lif, options.binarize);
      mask.provenance["fusion"] = options.fusion;
    }
    r.scores = score(mask.data, gt);
    r.slices = per_slice_scores(mask.data, gt);
    r.parameters = std::move(mask.provenance);
    r.mask = std::move(mask.data);
  });
  return report;
}

nlohmann::json to_json(const ComparisonReport& report) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& r : report.methods) {
    std::vector<double> dice;
    for (const auto& s : r.slices) dice.push_back(s.dice);
    nlohmann::json entry{{"method", r.method}, {"scores", r.scores}, {"parameters", r.parameters},
                         {"per_slice_dice", dice}};
    if (!dice.empty()) entry["per_slice_dice_summary"] = summarize(dice);
    methods.push_back(std::move(entry));
  }
  return {{"methods", methods}};
}

void write_report_csv(const std::filesystem::path& path, const ComparisonReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(9);
  out << "method,tpr,fpr,accuracy,dice\n";
  for (const auto& r : report.methods) {
    out << r.method << ',' << r.scores.tpr << ',' << r.scores.fpr << ',' << r.scores.accuracy << ','
        << r.scores.dice << '\n';
  }
}

void write_per_slice_csv(const std::filesystem::path& path, const ComparisonReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(9);
  out << "method,z,tp,fp,tn,fn,tpr,fpr,accuracy,dice\n";
  for (const auto& r : report.methods) {
    for (std::size_t z = 0; z < r.slices.size(); ++z) {
      const auto& s = r.slices[z];
      out << r.method << ',' << z << ',' << s.tp << ',' << s.fp << ',' << s.tn << ',' << s.fn << ',' << s.tpr
          << ',' << s.fpr << ',' << s.accuracy << ',' << s.dice << '\n';
    }
  }
}

}  // namespace life
