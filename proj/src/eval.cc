// Copyright (c) the prefilter Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prefilter/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "prefilter/parallel.h"

namespace prefilter {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Metric values mapped to an axis that ascends with quality.
double axis_of(Metric m, double value) {
  return m == Metric::kMse ? -value : value;
}
double axis_to_value(Metric m, double axis) {
  return m == Metric::kMse ? -axis : axis;
}

struct Interp {
  std::vector<double> x;   // ascending axis
  std::vector<double> ly;  // log rate

  double operator()(double q) const {
    if (q <= x.front()) return ly.front();
    if (q >= x.back()) return ly.back();
    const auto it = std::upper_bound(x.begin(), x.end(), q);
    const size_t i = size_t(it - x.begin());
    const double a = (q - x[i - 1]) / (x[i] - x[i - 1]);
    return ly[i - 1] + a * (ly[i] - ly[i - 1]);
  }
};

Interp make_interp(const RDCurve& c) {
  Interp it;
  for (const RDPoint& p : c.points) {
    it.x.push_back(axis_of(c.metric, p.value));
    it.ly.push_back(std::log(p.bpp));
  }
  return it;
}

}  // namespace

RDCurve build_rd_curve(const Corpus& corpus, const Codec& codec,
                       const std::vector<int>& qualities, Metric metric,
                       const Filter* filter, int threads,
                       const std::string& dataset_tag) {
  if (corpus.empty()) throw std::invalid_argument("build_rd_curve: empty corpus");
  if (qualities.empty())
    throw std::invalid_argument("build_rd_curve: no qualities");

  const size_t n = corpus.size();
  std::vector<Tensor> inputs(n);   // filtered once when a filter is given
  std::vector<Tensor> originals(n);
  std::vector<std::string> failures(n);
  parallel_for(int(n), threads, [&](int i) {
    originals[size_t(i)] = u8_to_tensor(corpus.image(size_t(i)));
    inputs[size_t(i)] =
        filter ? filter->apply(originals[size_t(i)]) : originals[size_t(i)];
  });

  RDCurve curve;
  curve.codec = codec.spec().name;
  curve.metric = metric;
  curve.filtered = filter != nullptr;
  curve.dataset = dataset_tag;
  for (int q : qualities) {
    std::vector<double> bpps(n), values(n);
    parallel_for(int(n), threads, [&](int i) {
      try {
        EncodeResult r = codec.encode_decode(inputs[size_t(i)], q);
        bpps[size_t(i)] = r.bpp;
        values[size_t(i)] =
            compute_metric(metric, originals[size_t(i)], r.decoded);
      } catch (const std::exception& e) {
        failures[size_t(i)] = corpus.path(size_t(i)) + ": " + e.what();
      }
    });
    std::string all_failures;
    for (const auto& f : failures)
      if (!f.empty()) all_failures += "\n  " + f;
    if (!all_failures.empty())
      throw AdapterError("build_rd_curve: codec failed on:" + all_failures);
    RDPoint p;
    p.quality = q;
    p.bpp = std::accumulate(bpps.begin(), bpps.end(), 0.0) / double(n);
    p.value = std::accumulate(values.begin(), values.end(), 0.0) / double(n);
    curve.points.push_back(p);
  }
  prune_dominated(curve);
  return curve;
}

SavingsCurve rate_savings(const RDCurve& filtered, const RDCurve& baseline) {
  if (filtered.metric != baseline.metric)
    throw std::invalid_argument("rate_savings: metric mismatch");
  if (filtered.points.size() < 2 || baseline.points.size() < 2)
    throw std::invalid_argument("rate_savings: need at least 2 points per curve");
  const Metric m = filtered.metric;
  Interp lf = make_interp(filtered);
  Interp lb = make_interp(baseline);
  const double lo = std::max(lf.x.front(), lb.x.front());
  const double hi = std::min(lf.x.back(), lb.x.back());
  if (!(lo < hi))
    throw std::invalid_argument(
        "rate_savings: curves share no distortion overlap");

  // Knots of both curves plus a dense uniform grid.
  std::vector<double> grid;
  for (double v : lf.x)
    if (v >= lo && v <= hi) grid.push_back(v);
  for (double v : lb.x)
    if (v >= lo && v <= hi) grid.push_back(v);
  const int kDense = 512;
  for (int i = 0; i <= kDense; ++i)
    grid.push_back(lo + (hi - lo) * double(i) / kDense);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  SavingsCurve out;
  std::vector<double> ratio_m1(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    const double diff = lf(grid[i]) - lb(grid[i]);
    ratio_m1[i] = std::expm1(diff);  // rate_f/rate_b - 1
    out.distortion.push_back(axis_to_value(m, grid[i]));
    out.savings.push_back(-ratio_m1[i]);
  }
  // Trapezoidal average over the distortion overlap.
  double integral = 0;
  for (size_t i = 1; i < grid.size(); ++i)
    integral += 0.5 * (ratio_m1[i] + ratio_m1[i - 1]) * (grid[i] - grid[i - 1]);
  out.bd_rate = integral / (hi - lo);
  return out;
}

double bd_rate_cubic(const RDCurve& filtered, const RDCurve& baseline) {
  auto fit = [](const RDCurve& c) {
    const int n = int(c.points.size());
    if (n < 4)
      throw std::invalid_argument("bd_rate_cubic: need at least 4 points");
    Eigen::MatrixXd A(n, 4);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      const double d = axis_of(c.metric, c.points[size_t(i)].value);
      A(i, 0) = 1;
      A(i, 1) = d;
      A(i, 2) = d * d;
      A(i, 3) = d * d * d;
      y(i) = std::log(c.points[size_t(i)].bpp);
    }
    return Eigen::VectorXd(A.colPivHouseholderQr().solve(y));
  };
  Eigen::VectorXd cf = fit(filtered), cb = fit(baseline);
  double lo = std::max(axis_of(filtered.metric, filtered.points.front().value),
                       axis_of(baseline.metric, baseline.points.front().value));
  double hi = std::min(axis_of(filtered.metric, filtered.points.back().value),
                       axis_of(baseline.metric, baseline.points.back().value));
  if (!(lo < hi)) throw std::invalid_argument("bd_rate_cubic: no overlap");
  auto integrate = [&](const Eigen::VectorXd& c) {
    double acc = 0;
    for (int p = 0; p < 4; ++p)
      acc += c(p) / (p + 1) * (std::pow(hi, p + 1) - std::pow(lo, p + 1));
    return acc;
  };
  const double avg_diff = (integrate(cf) - integrate(cb)) / (hi - lo);
  return std::expm1(avg_diff);
}

TaskCurve task_accuracy_curve(const Corpus& corpus, const Classifier& classifier,
                              const Codec& codec,
                              const std::vector<int>& qualities,
                              const Filter* filter, int threads,
                              const std::string& dataset_tag) {
  if (corpus.class_names().empty())
    throw std::invalid_argument("task_accuracy_curve: corpus must be labeled");
  if (qualities.empty())
    throw std::invalid_argument("task_accuracy_curve: no qualities");
  const size_t n = corpus.size();
  std::vector<Tensor> inputs(n);
  parallel_for(int(n), threads, [&](int i) {
    Tensor x = u8_to_tensor(corpus.image(size_t(i)));
    inputs[size_t(i)] = filter ? filter->apply(x) : x;
  });
  TaskCurve curve;
  curve.codec = codec.spec().name;
  curve.filtered = filter != nullptr;
  curve.dataset = dataset_tag;
  for (int q : qualities) {
    std::vector<int> correct(n, 0);
    std::vector<double> bpps(n, 0.0);
    parallel_for(int(n), threads, [&](int i) {
      EncodeResult r = codec.encode_decode(inputs[size_t(i)], q);
      bpps[size_t(i)] = r.bpp;
      correct[size_t(i)] =
          classifier.predict(r.decoded) == corpus.label(size_t(i)) ? 1 : 0;
    });
    TaskPoint p;
    p.quality = q;
    p.bpp = std::accumulate(bpps.begin(), bpps.end(), 0.0) / double(n);
    p.accuracy =
        std::accumulate(correct.begin(), correct.end(), 0.0) / double(n);
    curve.points.push_back(p);
  }
  return curve;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

// Minimal deterministic SVG line plot.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)),
        ylabel_(std::move(ylabel)) {}

  void add_series(const std::string& label, const std::vector<double>& xs,
                  const std::vector<double>& ys, bool dashed) {
    series_.push_back({label, xs, ys, dashed});
    for (double v : xs) {
      xmin_ = std::min(xmin_, v);
      xmax_ = std::max(xmax_, v);
    }
    for (double v : ys) {
      ymin_ = std::min(ymin_, v);
      ymax_ = std::max(ymax_, v);
    }
  }

  void write(const std::string& path) const {
    const int W = 720, H = 480, L = 70, R = 210, T = 40, B = 50;
    const double pw = W - L - R, ph = H - T - B;
    double xmin = xmin_, xmax = xmax_, ymin = ymin_, ymax = ymax_;
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    const double xpad = 0.03 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return T + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ofstream f(path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" font-family=\"sans-serif\">\n";
    f << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-size=\"15\">" << title_ << "</text>\n";
    f << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << fmt(pw)
      << "\" height=\"" << fmt(ph)
      << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double xv = xmin + (xmax - xmin) * i / 5.0;
      const double yv = ymin + (ymax - ymin) * i / 5.0;
      f << "<line x1=\"" << fmt(px(xv)) << "\" y1=\"" << T + ph << "\" x2=\""
        << fmt(px(xv)) << "\" y2=\"" << T + ph + 5
        << "\" stroke=\"#333\"/>\n";
      f << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << T + ph + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(xv)
        << "</text>\n";
      f << "<line x1=\"" << L - 5 << "\" y1=\"" << fmt(py(yv)) << "\" x2=\""
        << L << "\" y2=\"" << fmt(py(yv)) << "\" stroke=\"#333\"/>\n";
      f << "<text x=\"" << L - 8 << "\" y=\"" << fmt(py(yv) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv) << "</text>\n";
    }
    f << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel_ << "</text>\n";
    f << "<text x=\"18\" y=\"" << T + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << T + ph / 2 << ")\">" << ylabel_ << "</text>\n";
    for (size_t s = 0; s < series_.size(); ++s) {
      const auto& sr = series_[s];
      const char* color = kPalette[s % 8];
      f << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.8\"";
      if (sr.dashed) f << " stroke-dasharray=\"6 4\"";
      f << " points=\"";
      for (size_t i = 0; i < sr.xs.size(); ++i)
        f << fmt(px(sr.xs[i])) << "," << fmt(py(sr.ys[i])) << " ";
      f << "\"/>\n";
      for (size_t i = 0; i < sr.xs.size(); ++i)
        f << "<circle cx=\"" << fmt(px(sr.xs[i])) << "\" cy=\""
          << fmt(py(sr.ys[i])) << "\" r=\"2.4\" fill=\"" << color << "\"/>\n";
      const double ly = T + 16 + 18 * double(s);
      f << "<line x1=\"" << W - R + 14 << "\" y1=\"" << fmt(ly - 4) << "\" x2=\""
        << W - R + 44 << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"";
      if (sr.dashed) f << " stroke-dasharray=\"6 4\"";
      f << "/>\n";
      f << "<text x=\"" << W - R + 50 << "\" y=\"" << fmt(ly)
        << "\" font-size=\"11\">" << sr.label << "</text>\n";
    }
    f << "</svg>\n";
  }

 private:
  struct Series {
    std::string label;
    std::vector<double> xs, ys;
    bool dashed;
  };
  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
  double xmin_ = 1e300, xmax_ = -1e300, ymin_ = 1e300, ymax_ = -1e300;
};

std::string curve_stem(const RDCurve& c) {
  std::string ds = c.dataset.empty() ? "corpus" : c.dataset;
  return "rd_" + ds + "_" + c.codec + "_" + (c.filtered ? "filtered" : "baseline");
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<RDCurve>& curves,
                                     const std::vector<SavingsCurve>& savings,
                                     const std::vector<std::string>& savings_labels,
                                     const std::string& out_dir) {
  if (curves.empty()) throw std::invalid_argument("emit_report: no curves");
  if (savings.size() != savings_labels.size())
    throw std::invalid_argument("emit_report: savings/label count mismatch");
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;

  for (const RDCurve& c : curves) {
    const std::string path = out_dir + "/" + curve_stem(c) + ".csv";
    std::ofstream f(path);
    f << "dataset,codec,filtered,quality,bpp,metric,value\n";
    for (const RDPoint& p : c.points)
      f << (c.dataset.empty() ? "corpus" : c.dataset) << "," << c.codec << ","
        << (c.filtered ? 1 : 0) << "," << p.quality << "," << fmt(p.bpp) << ","
        << to_string(c.metric) << "," << fmt(p.value) << "\n";
    written.push_back(path);
  }

  {
    nlohmann::json j;
    auto arr = nlohmann::json::array();
    for (const RDCurve& c : curves) {
      nlohmann::json jc{{"dataset", c.dataset},
                        {"codec", c.codec},
                        {"filtered", c.filtered},
                        {"metric", to_string(c.metric)}};
      auto pts = nlohmann::json::array();
      for (const RDPoint& p : c.points)
        pts.push_back({{"quality", p.quality}, {"bpp", p.bpp}, {"value", p.value}});
      jc["points"] = pts;
      arr.push_back(jc);
    }
    j["curves"] = arr;
    auto sv = nlohmann::json::array();
    for (size_t i = 0; i < savings.size(); ++i) {
      nlohmann::json js{{"label", savings_labels[i]},
                        {"bd_rate", savings[i].bd_rate}};
      js["distortion"] = savings[i].distortion;
      js["savings"] = savings[i].savings;
      sv.push_back(js);
    }
    j["rate_savings"] = sv;
    const std::string path = out_dir + "/curves.json";
    std::ofstream f(path);
    f << j.dump(2) << "\n";
    written.push_back(path);
  }

  {
    SvgPlot plot("Rate-distortion", "bpp", to_string(curves.front().metric));
    for (const RDCurve& c : curves) {
      std::vector<double> xs, ys;
      for (const RDPoint& p : c.points) {
        xs.push_back(p.bpp);
        ys.push_back(p.value);
      }
      plot.add_series(curve_stem(c), xs, ys, !c.filtered);
    }
    const std::string path = out_dir + "/rd_curves.svg";
    plot.write(path);
    written.push_back(path);
  }

  if (!savings.empty()) {
    SvgPlot plot("Relative rate savings", to_string(curves.front().metric),
                 "savings");
    for (size_t i = 0; i < savings.size(); ++i)
      plot.add_series(savings_labels[i] + " (BD " + fmt(savings[i].bd_rate * 100) +
                          "%)",
                      savings[i].distortion, savings[i].savings, false);
    const std::string path = out_dir + "/rate_savings.svg";
    plot.write(path);
    written.push_back(path);
  }
  return written;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length samples");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (double(i) + double(j)) + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0 || vb <= 0) return 0;
  return cov / std::sqrt(va * vb);
}

}  // namespace prefilter
