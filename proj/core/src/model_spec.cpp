#include "icalpha/model_spec.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "icalpha/errors.hpp"

namespace icalpha {

using nlohmann::json;

std::string to_string(MeanLink link) {
  switch (link) {
    case MeanLink::identity: return "identity";
    case MeanLink::log: return "log";
    case MeanLink::logit: return "logit";
  }
  return "?";
}

std::string to_string(VarLink link) {
  return link == VarLink::identity_positive ? "identity-positive" : "log";
}

std::string to_string(WorkingStructure s) {
  return s == WorkingStructure::independence ? "independence" : "exchangeable";
}

std::string to_string(InterceptMode m) {
  return m == InterceptMode::shared ? "shared" : "per-item";
}

std::string to_string(VarianceMode m) {
  return m == VarianceMode::covariate ? "covariate" : "per-item-constant";
}

std::string to_string(OmegaConvention c) {
  return c == OmegaConvention::inverse ? "inverse" : "literal";
}

namespace {

[[noreturn]] void fail(const std::string& name, const std::string& msg) {
  throw InputError(name + ": " + msg);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& name,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) fail(name, "unknown key '" + it.key() + "' in " + where);
}

std::vector<std::string> string_list(const json& v, const std::string& name,
                                     const std::string& where) {
  if (!v.is_array()) fail(name, where + " must be an array of column names");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) fail(name, where + " must contain only strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

WorkingStructure parse_structure(const std::string& s, const std::string& name,
                                 const std::string& where) {
  if (s == "independence") return WorkingStructure::independence;
  if (s == "exchangeable") return WorkingStructure::exchangeable;
  fail(name, where + ": unknown working structure '" + s + "'");
}

}  // namespace

ModelSpec parse_model_spec_text(const std::string& json_text, const std::string& name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(name, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(name, "top level must be an object");
  check_keys(doc, {"mean", "variance", "alpha", "missingness", "working"}, name, "top level");

  ModelSpec spec;

  if (!doc.contains("mean")) fail(name, "missing key 'mean'");
  {
    const json& m = doc["mean"];
    check_keys(m, {"link", "intercept", "columns"}, name, "'mean'");
    if (!m.contains("columns")) fail(name, "missing key 'mean.columns'");
    spec.mean_columns = string_list(m["columns"], name, "'mean.columns'");
    if (m.contains("link")) {
      const std::string link = m["link"].get<std::string>();
      if (link == "identity") spec.mean_link = MeanLink::identity;
      else if (link == "log") spec.mean_link = MeanLink::log;
      else if (link == "logit") spec.mean_link = MeanLink::logit;
      else fail(name, "unknown mean link '" + link + "'");
    }
    if (m.contains("intercept")) {
      const std::string mode = m["intercept"].get<std::string>();
      if (mode == "shared") spec.intercept_mode = InterceptMode::shared;
      else if (mode == "per-item") spec.intercept_mode = InterceptMode::per_item;
      else fail(name, "unknown intercept mode '" + mode + "'");
    }
  }

  if (!doc.contains("variance")) fail(name, "missing key 'variance'");
  {
    const json& v = doc["variance"];
    check_keys(v, {"link", "mode", "columns"}, name, "'variance'");
    if (v.contains("columns")) spec.var_columns = string_list(v["columns"], name, "'variance.columns'");
    if (v.contains("link")) {
      const std::string link = v["link"].get<std::string>();
      if (link == "identity-positive") spec.var_link = VarLink::identity_positive;
      else if (link == "log") spec.var_link = VarLink::log;
      else fail(name, "unknown variance link '" + link + "'");
    }
    if (v.contains("mode")) {
      const std::string mode = v["mode"].get<std::string>();
      if (mode == "covariate") spec.variance_mode = VarianceMode::covariate;
      else if (mode == "per-item-constant") spec.variance_mode = VarianceMode::per_item_constant;
      else fail(name, "unknown variance mode '" + mode + "'");
    }
    if (spec.variance_mode == VarianceMode::per_item_constant && !spec.var_columns.empty())
      fail(name, "variance mode 'per-item-constant' does not take covariate columns");
  }

  if (!doc.contains("alpha")) fail(name, "missing key 'alpha'");
  {
    const json& a = doc["alpha"];
    check_keys(a, {"columns", "pooled"}, name, "'alpha'");
    if (a.contains("columns")) spec.alpha_columns = string_list(a["columns"], name, "'alpha.columns'");
    if (a.contains("pooled")) {
      if (!a["pooled"].is_boolean()) fail(name, "'alpha.pooled' must be a boolean");
      spec.pooled_alpha = a["pooled"].get<bool>();
    }
  }

  if (doc.contains("missingness")) {
    const json& q = doc["missingness"];
    check_keys(q, {"columns"}, name, "'missingness'");
    if (!q.contains("columns")) fail(name, "missing key 'missingness.columns'");
    spec.miss_columns = string_list(q["columns"], name, "'missingness.columns'");
    spec.has_missingness_model = true;
  }

  if (doc.contains("working")) {
    const json& w = doc["working"];
    check_keys(w, {"mean", "variance", "alpha"}, name, "'working'");
    if (w.contains("mean"))
      spec.work_mean = parse_structure(w["mean"].get<std::string>(), name, "'working.mean'");
    if (w.contains("variance"))
      spec.work_var = parse_structure(w["variance"].get<std::string>(), name, "'working.variance'");
    if (w.contains("alpha"))
      spec.work_alpha = parse_structure(w["alpha"].get<std::string>(), name, "'working.alpha'");
  }

  return spec;
}

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_spec_text(buf.str(), path);
}

std::string model_spec_to_json(const ModelSpec& spec) {
  json doc;
  doc["mean"] = {{"link", to_string(spec.mean_link)},
                 {"intercept", to_string(spec.intercept_mode)},
                 {"columns", spec.mean_columns}};
  doc["variance"] = {{"link", to_string(spec.var_link)},
                     {"mode", to_string(spec.variance_mode)},
                     {"columns", spec.var_columns}};
  doc["alpha"] = {{"columns", spec.alpha_columns}, {"pooled", spec.pooled_alpha}};
  if (spec.has_missingness_model) doc["missingness"] = {{"columns", spec.miss_columns}};
  doc["working"] = {{"mean", to_string(spec.work_mean)},
                    {"variance", to_string(spec.work_var)},
                    {"alpha", to_string(spec.work_alpha)}};
  return doc.dump(2);
}

}  // namespace icalpha
