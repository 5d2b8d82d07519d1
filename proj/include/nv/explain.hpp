// Turns a trained head into reports: per-class layer-partitioned weight
// listings, concept-class sums over externally supplied unit labels,
// per-view mean weights, and csv/json/svg emission. Everything here is a
// pure function of a checkpointable model plus the label table.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nv/neuroview.hpp"

namespace nv {

struct LayerSummary {
  int layer = 0;  // conv ordinal
  int count = 0;  // entries across all views
  float min_weight = 0, max_weight = 0;
  double mean_weight = 0;
  double positive_share = 0;  // this layer's positive mass / all positive mass
};

struct ClassWeightReport {
  int class_id = 0;
  std::string class_name;
  std::vector<UnitWeight<float>> entries;  // concatenation order, U_total long
  std::vector<LayerSummary> layer_summaries;
};

ClassWeightReport weight_report(const NeuroViewModel<float>& model, int class_k);

// Unit -> concept assignment, at most one per unit. Units never mentioned
// aggregate under "unlabeled".
struct ConceptLabelTable {
  struct Label {
    std::string concept_name;
    std::string category;  // color|texture|object|scene|part|material
  };
  std::map<std::pair<int, int>, Label> by_unit;  // key (conv layer, channel)
};

// CSV with header layer,channel,concept,category.
ConceptLabelTable load_concept_labels(const std::filesystem::path& path);
void save_concept_labels(const ConceptLabelTable& table, const std::filesystem::path& path);
// Throws when a label references a unit outside the layout or a category is
// unknown.
void validate_labels(const ConceptLabelTable& table, const ArchSpec& spec);

struct ConceptMap {
  int class_id = 0;
  std::string class_name;
  int top_k = 0;
  std::vector<std::pair<std::string, double>> sums;  // sorted by concept name
  std::vector<std::pair<std::string, double>> top_positive;  // desc, ties by name
  std::vector<std::pair<std::string, double>> top_negative;  // asc, ties by name
};

ConceptMap concept_map(const NeuroViewModel<float>& model, const ConceptLabelTable& labels,
                       int class_k, int top_k);

// Per view: sum of that view's unit weights divided by units-per-view.
std::vector<std::pair<int, double>> view_mean(const NeuroViewModel<float>& model,
                                              int class_k);

// --- rendering -------------------------------------------------------------

enum class RenderFormat { csv, json, svg };
RenderFormat parse_render_format(const std::string& s);
const char* extension(RenderFormat f);

void render_report(const ClassWeightReport& r, RenderFormat f,
                   const std::filesystem::path& path);
void render_concept_map(const ConceptMap& m, RenderFormat f,
                        const std::filesystem::path& path);
void render_view_means(const std::vector<std::pair<int, double>>& means, int class_id,
                       const std::string& class_name, RenderFormat f,
                       const std::filesystem::path& path);

// CSV parsers for round-trips and cross-checkpoint diffing.
ClassWeightReport parse_report_csv(const std::filesystem::path& path);
std::vector<std::pair<std::string, double>> parse_concept_csv(const std::filesystem::path& path);

}  // namespace nv
