#include "nv/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nv {

namespace fs = std::filesystem;

namespace {

// float32 with 9 significant digits round-trips exactly
std::string fmt_f32(float v) { return strprintf("%.9g", double(v)); }
std::string fmt_f64(double v) { return strprintf("%.17g", v); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

const std::set<std::string>& categories() {
  static const std::set<std::string> cats{"color", "texture", "object",
                                          "scene", "part",    "material"};
  return cats;
}

}  // namespace

ClassWeightReport weight_report(const NeuroViewModel<float>& model, int class_k) {
  ClassWeightReport r;
  r.class_id = class_k;
  r.class_name = model.class_name(class_k);
  r.entries = model.weight_row(class_k);

  const auto layout = unit_layout(model.spec);
  double total_positive = 0.0;
  for (const auto& e : r.entries)
    if (e.weight > 0) total_positive += double(e.weight);
  for (const LayerUnits& lu : layout) {
    LayerSummary s;
    s.layer = lu.conv_index;
    double sum = 0.0, pos = 0.0;
    bool first = true;
    for (const auto& e : r.entries) {
      if (e.layer != lu.conv_index) continue;
      if (first) {
        s.min_weight = s.max_weight = e.weight;
        first = false;
      } else {
        s.min_weight = std::min(s.min_weight, e.weight);
        s.max_weight = std::max(s.max_weight, e.weight);
      }
      sum += double(e.weight);
      if (e.weight > 0) pos += double(e.weight);
      s.count++;
    }
    s.mean_weight = s.count ? sum / s.count : 0.0;
    s.positive_share = total_positive > 0.0 ? pos / total_positive : 0.0;
    r.layer_summaries.push_back(s);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Concept labels.

ConceptLabelTable load_concept_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label table: " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) !=
                                     std::vector<std::string>{"layer", "channel",
                                                              "concept", "category"})
    throw std::runtime_error("label table must start with header layer,channel,concept,category: " +
                             path.string());
  ConceptLabelTable table;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cols = split_csv_line(line);
    if (cols.size() != 4)
      throw std::runtime_error(strprintf("label table %s line %d: expected 4 columns",
                                         path.string().c_str(), lineno));
    const int layer = std::stoi(cols[0]);
    const int channel = std::stoi(cols[1]);
    auto key = std::make_pair(layer, channel);
    if (table.by_unit.count(key))
      throw std::runtime_error(strprintf("label table %s line %d: unit (%d,%d) labeled twice",
                                         path.string().c_str(), lineno, layer, channel));
    table.by_unit[key] = {cols[2], cols[3]};
  }
  return table;
}

void save_concept_labels(const ConceptLabelTable& table, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write label table: " + path.string());
  out << "layer,channel,concept,category\n";
  for (const auto& [unit, label] : table.by_unit)
    out << unit.first << "," << unit.second << "," << label.concept_name << ","
        << label.category << "\n";
}

void validate_labels(const ConceptLabelTable& table, const ArchSpec& spec) {
  const auto layout = unit_layout(spec);
  for (const auto& [unit, label] : table.by_unit) {
    const auto [layer, channel] = unit;
    if (layer < 0 || layer >= int(layout.size()) || channel < 0 ||
        channel >= layout[size_t(layer)].channels)
      throw std::runtime_error(strprintf(
          "label table references nonexistent unit (layer %d, channel %d)", layer,
          channel));
    if (!categories().count(label.category))
      throw std::runtime_error("label table has unknown category '" + label.category +
                               "' for concept '" + label.concept_name + "'");
  }
}

ConceptMap concept_map(const NeuroViewModel<float>& model, const ConceptLabelTable& labels,
                       int class_k, int top_k) {
  validate_labels(labels, model.spec);
  const auto row = model.weight_row(class_k);
  // accumulate in layout order; double accumulators keyed by concept name
  std::map<std::string, double> sums;
  for (const auto& e : row) {
    auto it = labels.by_unit.find({e.layer, e.channel});
    const std::string& cname =
        it == labels.by_unit.end() ? "unlabeled" : it->second.concept_name;
    sums[cname] += double(e.weight);
  }
  ConceptMap m;
  m.class_id = class_k;
  m.class_name = model.class_name(class_k);
  m.top_k = top_k;
  m.sums.assign(sums.begin(), sums.end());

  auto positives = m.sums, negatives = m.sums;
  std::erase_if(positives, [](const auto& p) { return !(p.second > 0.0); });
  std::erase_if(negatives, [](const auto& p) { return !(p.second < 0.0); });
  std::sort(positives.begin(), positives.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::sort(negatives.begin(), negatives.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  if (int(positives.size()) > top_k) positives.resize(size_t(top_k));
  if (int(negatives.size()) > top_k) negatives.resize(size_t(top_k));
  m.top_positive = std::move(positives);
  m.top_negative = std::move(negatives);
  return m;
}

std::vector<std::pair<int, double>> view_mean(const NeuroViewModel<float>& model,
                                              int class_k) {
  const auto row = model.weight_row(class_k);
  const int per_view = unit_count(model.spec);
  std::vector<std::pair<int, double>> out;
  for (int v = 0; v < model.config.views; ++v) {
    double acc = 0.0;
    for (int u = 0; u < per_view; ++u) acc += double(row[size_t(v) * per_view + u].weight);
    out.emplace_back(v, acc / double(per_view));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering.

RenderFormat parse_render_format(const std::string& s) {
  if (s == "csv") return RenderFormat::csv;
  if (s == "json") return RenderFormat::json;
  if (s == "svg") return RenderFormat::svg;
  throw std::invalid_argument("unknown render format: " + s);
}

const char* extension(RenderFormat f) {
  switch (f) {
    case RenderFormat::csv: return "csv";
    case RenderFormat::json: return "json";
    default: return "svg";
  }
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path.string());
  return out;
}

// Layer color cycle for the bar charts.
const char* layer_color(int layer) {
  static const char* colors[] = {"#4363d8", "#e6194b", "#3cb44b", "#f58231",
                                 "#911eb4", "#46f0f0", "#f032e6", "#808000"};
  return colors[size_t(layer) % 8];
}

void svg_bars(std::ostream& out, const std::vector<double>& values,
              const std::vector<std::string>& colors, const std::string& title,
              const std::vector<std::string>& legend = {}) {
  const int n = int(values.size());
  const double bar_w = std::max(1.0, std::min(20.0, 900.0 / std::max(1, n)));
  const double width = std::max(320.0, bar_w * n + 80.0);
  const double height = 300.0;
  const double plot_h = 220.0, plot_y = 40.0, plot_x = 50.0;
  double vmax = 1e-12;
  for (double v : values) vmax = std::max(vmax, std::abs(v));
  const double mid = plot_y + plot_h / 2.0;
  const double scale = (plot_h / 2.0 - 4.0) / vmax;

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << strprintf("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                   "viewBox=\"0 0 %.0f %.0f\">\n", width, height, width, height);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << strprintf("<text x=\"%.0f\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">%s</text>\n",
                   plot_x, title.c_str());
  out << strprintf("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888\" stroke-width=\"1\"/>\n",
                   plot_x, mid, plot_x + bar_w * n, mid);
  for (int i = 0; i < n; ++i) {
    const double v = values[size_t(i)];
    const double h = std::abs(v) * scale;
    const double y = v >= 0 ? mid - h : mid;
    out << strprintf("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n",
                     plot_x + bar_w * i, y, std::max(0.5, bar_w - 0.5), std::max(0.1, h),
                     colors[size_t(i)].c_str());
  }
  double ly = plot_y;
  for (size_t i = 0; i < legend.size(); ++i) {
    out << strprintf("<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/>\n",
                     width - 120.0, ly, layer_color(int(i)));
    out << strprintf("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\">%s</text>\n",
                     width - 105.0, ly + 9.0, legend[i].c_str());
    ly += 16.0;
  }
  out << "</svg>\n";
}

}  // namespace

void render_report(const ClassWeightReport& r, RenderFormat f, const fs::path& path) {
  if (f == RenderFormat::csv) {
    auto out = open_out(path);
    out << "class,layer,view,channel,weight\n";
    for (const auto& e : r.entries)
      out << r.class_id << "," << e.layer << "," << e.view << "," << e.channel << ","
          << fmt_f32(e.weight) << "\n";
  } else if (f == RenderFormat::json) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries)
      entries.push_back({{"layer", e.layer},
                         {"view", e.view},
                         {"channel", e.channel},
                         {"weight", double(e.weight)}});
    nlohmann::json summaries = nlohmann::json::array();
    for (const auto& s : r.layer_summaries)
      summaries.push_back({{"layer", s.layer},
                           {"count", s.count},
                           {"min", double(s.min_weight)},
                           {"max", double(s.max_weight)},
                           {"mean", s.mean_weight},
                           {"positive_share", s.positive_share}});
    nlohmann::json j{{"class", r.class_id},
                     {"class_name", r.class_name},
                     {"entries", std::move(entries)},
                     {"layer_summaries", std::move(summaries)}};
    open_out(path) << j.dump(2) << "\n";
  } else {
    std::vector<double> values;
    std::vector<std::string> colors;
    std::vector<std::string> legend;
    int last_layer = -1;
    for (const auto& e : r.entries) {
      values.push_back(double(e.weight));
      colors.push_back(layer_color(e.layer));
      if (e.view == 0 && e.layer != last_layer) {
        legend.push_back("layer " + std::to_string(e.layer));
        last_layer = e.layer;
      }
    }
    auto out = open_out(path);
    svg_bars(out, values, colors,
             strprintf("head weights, class %d (%s)", r.class_id, r.class_name.c_str()),
             legend);
  }
}

ClassWeightReport parse_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report csv: " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"class", "layer", "view",
                                                       "channel", "weight"})
    throw std::runtime_error("report csv header mismatch in " + path.string());
  ClassWeightReport r;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cols = split_csv_line(line);
    if (cols.size() != 5)
      throw std::runtime_error("report csv row with wrong arity in " + path.string());
    if (first) {
      r.class_id = std::stoi(cols[0]);
      first = false;
    }
    r.entries.push_back({std::stoi(cols[1]), std::stoi(cols[2]), std::stoi(cols[3]),
                         std::strtof(cols[4].c_str(), nullptr)});
  }
  return r;
}

void render_concept_map(const ConceptMap& m, RenderFormat f, const fs::path& path) {
  if (f == RenderFormat::csv) {
    auto out = open_out(path);
    out << "class,concept,weight_sum\n";
    for (const auto& [cname, v] : m.sums)
      out << m.class_id << "," << cname << "," << fmt_f64(v) << "\n";
  } else if (f == RenderFormat::json) {
    nlohmann::json sums = nlohmann::json::object();
    for (const auto& [cname, v] : m.sums) sums[cname] = v;
    auto pairs = [](const std::vector<std::pair<std::string, double>>& xs) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& [cname, v] : xs)
        arr.push_back({{"concept", cname}, {"sum", v}});
      return arr;
    };
    nlohmann::json j{{"class", m.class_id},
                     {"class_name", m.class_name},
                     {"top_k", m.top_k},
                     {"sums", std::move(sums)},
                     {"top_positive", pairs(m.top_positive)},
                     {"top_negative", pairs(m.top_negative)}};
    open_out(path) << j.dump(2) << "\n";
  } else {
    // percentage view: |sum| / total |sum|, positives up, negatives down
    double denom = 0.0;
    for (const auto& [cname, v] : m.sums) denom += std::abs(v);
    std::vector<double> values;
    std::vector<std::string> colors;
    std::vector<std::string> names;
    for (const auto& [cname, v] : m.sums) {
      values.push_back(denom > 0 ? 100.0 * v / denom : 0.0);
      colors.push_back(v >= 0 ? "#3cb44b" : "#e6194b");
      names.push_back(cname);
    }
    auto out = open_out(path);
    svg_bars(out, values, colors,
             strprintf("concept weight share %%, class %d (%s)", m.class_id,
                       m.class_name.c_str()),
             names);
  }
}

std::vector<std::pair<std::string, double>> parse_concept_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open concept csv: " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      split_csv_line(line) != std::vector<std::string>{"class", "concept", "weight_sum"})
    throw std::runtime_error("concept csv header mismatch in " + path.string());
  std::vector<std::pair<std::string, double>> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cols = split_csv_line(line);
    if (cols.size() != 3)
      throw std::runtime_error("concept csv row with wrong arity in " + path.string());
    out.emplace_back(cols[1], std::strtod(cols[2].c_str(), nullptr));
  }
  return out;
}

void render_view_means(const std::vector<std::pair<int, double>>& means, int class_id,
                       const std::string& class_name, RenderFormat f,
                       const fs::path& path) {
  if (f == RenderFormat::csv) {
    auto out = open_out(path);
    out << "class,view,mean_weight\n";
    for (const auto& [v, w] : means)
      out << class_id << "," << v << "," << fmt_f64(w) << "\n";
  } else if (f == RenderFormat::json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [v, w] : means) arr.push_back({{"view", v}, {"mean_weight", w}});
    nlohmann::json j{{"class", class_id}, {"class_name", class_name},
                     {"view_means", std::move(arr)}};
    open_out(path) << j.dump(2) << "\n";
  } else {
    std::vector<double> values;
    std::vector<std::string> colors;
    for (const auto& [v, w] : means) {
      values.push_back(w);
      colors.push_back(w >= 0 ? "#3cb44b" : "#e6194b");
    }
    auto out = open_out(path);
    svg_bars(out, values, colors,
             strprintf("per-view mean weight, class %d (%s)", class_id, class_name.c_str()));
  }
}

}  // namespace nv
