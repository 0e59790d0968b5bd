#include "spikeshort/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "spikeshort/errors.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"
#include "spikeshort/trainer.hpp"

namespace spikeshort {

Histogram histogram(std::span<const real> values, std::size_t bins, std::optional<real> range) {
  if (values.empty()) fail(ErrorKind::input, "histogram of an empty input");
  if (bins < 2) fail(ErrorKind::input, "histogram needs at least 2 bins");
  real r = 0.0;
  if (range) {
    if (!(*range > 0.0)) fail(ErrorKind::input, "histogram range must be positive");
    r = *range;
  } else {
    for (real v : values) r = std::max(r, std::abs(v));
    if (r == 0.0) r = 1.0;
  }
  Histogram h;
  h.edges.resize(bins + 1);
  const real width = 2.0 * r / static_cast<real>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = -r + width * static_cast<real>(i);
  h.edges.back() = r;
  h.counts.assign(bins, 0);
  for (real v : values) {
    std::size_t bin;
    if (!(v > -r)) {
      bin = 0;
    } else if (v >= r) {
      bin = bins - 1;
    } else {
      bin = std::min(bins - 1, static_cast<std::size_t>(std::floor((v + r) / width)));
    }
    ++h.counts[bin];
  }
  return h;
}

GradientStats gradient_stats(const std::string& name, std::span<const real> grads, std::size_t bins) {
  GradientStats s;
  s.name = name;
  s.count = grads.size();
  real max_abs = 0.0, sq = 0.0, abs_sum = 0.0;
  for (real g : grads) {
    max_abs = std::max(max_abs, std::abs(g));
    sq += g * g;
    abs_sum += std::abs(g);
  }
  s.l2 = std::sqrt(sq);
  s.mean_abs = grads.empty() ? 0.0 : abs_sum / static_cast<real>(grads.size());
  if (max_abs == 0.0) {
    s.near_zero_frac = 1.0;
  } else {
    const real threshold = kNearZeroRelative * max_abs;
    const auto near = std::count_if(grads.begin(), grads.end(), [threshold](real g) { return std::abs(g) < threshold; });
    s.near_zero_frac = static_cast<real>(near) / static_cast<real>(grads.size());
  }
  s.hist = histogram(grads, bins);
  return s;
}

const GradientStats* VanishingReport::layer(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

PassContext gradient_pass(Network& net, const Tensor& images, std::span<const int> labels, real lambda) {
  net.set_norm_mode(NormMode::train);
  net.zero_grad();
  PassContext ctx;
  ctx.lambda = lambda;
  Tape tape;
  TapeScope scope(&tape);
  Tensor loss = softmax_cross_entropy(combine_outputs(net.forward_train(images), lambda), labels);
  ctx.loss = loss.item();
  if (!std::isfinite(ctx.loss)) fail(ErrorKind::numeric, "non-finite loss in gradient pass");
  tape.backward(loss);
  ctx.backward_done = true;
  return ctx;
}

namespace {

std::string layer_of(const std::string& param) { return param.substr(0, param.rfind('.')); }

bool is_main_conv(const std::string& layer) {
  const auto dot = layer.find('.');
  return layer.rfind("block", 0) == 0 && dot != std::string::npos && layer.compare(dot + 1, 4, "conv") == 0;
}

}  // namespace

VanishingReport capture_gradients(const Network& net, const PassContext& ctx, std::string mode, std::uint64_t seed,
                                  std::size_t bins) {
  if (!ctx.backward_done) fail(ErrorKind::state, "capture_gradients called before a backward pass");
  VanishingReport report;
  report.mode = std::move(mode);
  report.lambda = ctx.lambda;
  report.seed = seed;

  std::vector<std::string> order;
  std::vector<std::vector<real>> grads;
  for (const auto& p : net.named_parameters()) {
    const std::string layer = layer_of(p.name);
    if (order.empty() || order.back() != layer) {
      order.push_back(layer);
      grads.emplace_back();
    }
    auto g = p.tensor.grad();
    grads.back().insert(grads.back().end(), g.begin(), g.end());
  }
  for (std::size_t i = 0; i < order.size(); ++i) report.layers.push_back(gradient_stats(order[i], grads[i], bins));

  for (const auto& l : report.layers) {
    if (!is_main_conv(l.name)) continue;
    if (report.first_layer.empty()) report.first_layer = l.name;
    report.last_layer = l.name;
  }
  if (report.first_layer == report.last_layer) {
    report.ratio_first_last = 1.0;
  } else {
    const real first = report.layer(report.first_layer)->l2;
    const real last = report.layer(report.last_layer)->l2;
    if (last > 0.0) {
      report.ratio_first_last = first / last;
    } else {
      report.ratio_first_last = first > 0.0 ? std::numeric_limits<real>::infinity() : 0.0;
    }
  }
  return report;
}

namespace {

using nlohmann::ordered_json;

ordered_json number(real v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

real from_number(const ordered_json& j) {
  if (j.is_null()) return std::numeric_limits<real>::infinity();
  return j.get<real>();
}

}  // namespace

std::string report_to_json(const VanishingReport& report) {
  ordered_json j;
  j["mode"] = report.mode;
  j["lambda"] = number(report.lambda);
  j["seed"] = report.seed;
  ordered_json layers = ordered_json::array();
  for (const auto& l : report.layers) {
    ordered_json lj;
    lj["name"] = l.name;
    lj["count"] = l.count;
    lj["l2"] = number(l.l2);
    lj["mean_abs"] = number(l.mean_abs);
    lj["near_zero_frac"] = number(l.near_zero_frac);
    lj["hist"] = ordered_json{{"edges", l.hist.edges}, {"counts", l.hist.counts}};
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  j["ratio_first_last"] = number(report.ratio_first_last);
  j["first_layer"] = report.first_layer;
  j["last_layer"] = report.last_layer;
  return j.dump(2) + "\n";
}

VanishingReport report_from_json(const std::string& text) {
  VanishingReport r;
  try {
    const auto j = ordered_json::parse(text);
    r.mode = j.at("mode").get<std::string>();
    r.lambda = from_number(j.at("lambda"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.first_layer = j.at("first_layer").get<std::string>();
    r.last_layer = j.at("last_layer").get<std::string>();
    for (const auto& lj : j.at("layers")) {
      GradientStats s;
      s.name = lj.at("name").get<std::string>();
      s.count = lj.at("count").get<std::size_t>();
      s.l2 = from_number(lj.at("l2"));
      s.mean_abs = from_number(lj.at("mean_abs"));
      s.near_zero_frac = from_number(lj.at("near_zero_frac"));
      s.hist.edges = lj.at("hist").at("edges").get<std::vector<real>>();
      s.hist.counts = lj.at("hist").at("counts").get<std::vector<std::size_t>>();
      r.layers.push_back(std::move(s));
    }
    r.ratio_first_last = from_number(j.at("ratio_first_last"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("gradient report: ") + e.what());
  }
  return r;
}

std::string report_to_csv(const VanishingReport& report) {
  std::string out = "layer,count,l2,mean_abs,near_zero_frac\n";
  for (const auto& l : report.layers) {
    out += l.name + "," + std::to_string(l.count) + "," + format_real(l.l2) + "," + format_real(l.mean_abs) + "," +
           format_real(l.near_zero_frac) + "\n";
  }
  return out;
}

void export_report(const VanishingReport& report, const std::filesystem::path& path, ReportFormat format) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << (format == ReportFormat::json ? report_to_json(report) : report_to_csv(report));
  if (!out) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

}  // namespace spikeshort
