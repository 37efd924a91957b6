#include "fabfhmm/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fabfhmm {

using nlohmann::json;

namespace {

constexpr const char* kSchemaLabel = "fabfhmm model schema v1";

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

MatrixXd matrix_from_json(const json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty())
    throw ParseError(std::string(kSchemaLabel) + ": " + what + " must be a matrix");
  const int r = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows[0].size());
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      throw ParseError(std::string(kSchemaLabel) + ": ragged rows in " + what);
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

VectorXd vector_from_json(const json& arr, const std::string& what) {
  if (!arr.is_array())
    throw ParseError(std::string(kSchemaLabel) + ": " + what + " must be an array");
  VectorXd v(arr.size());
  for (int i = 0; i < static_cast<int>(arr.size()); ++i) v[i] = arr[i].get<double>();
  return v;
}

const json& field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end())
    throw ParseError(std::string(kSchemaLabel) + ": missing field '" + name + "'");
  return *it;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string model_to_json(const FhmmParameters& params) {
  json doc;
  doc["M"] = params.structure.M;
  doc["K"] = params.structure.K;
  doc["D"] = params.structure.D;
  json alpha = json::array(), beta = json::array(), w = json::array();
  for (int m = 0; m < params.structure.M; ++m) {
    alpha.push_back(vector_to_json(params.alpha[m]));
    beta.push_back(matrix_to_json(params.beta[m]));
    w.push_back(matrix_to_json(params.W[m]));
  }
  doc["alpha"] = std::move(alpha);
  doc["beta"] = std::move(beta);
  doc["W"] = std::move(w);
  doc["C"] = vector_to_json(params.C);
  doc["bias"] = vector_to_json(params.bias);
  return doc.dump(2);
}

FhmmParameters model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string(kSchemaLabel) + ": not valid JSON: " + e.what());
  }
  FhmmParameters params;
  params.structure.M = field(doc, "M").get<int>();
  params.structure.K = field(doc, "K").get<std::vector<int>>();
  params.structure.D = field(doc, "D").get<int>();
  const json& alpha = field(doc, "alpha");
  const json& beta = field(doc, "beta");
  const json& w = field(doc, "W");
  if (static_cast<int>(alpha.size()) != params.structure.M ||
      static_cast<int>(beta.size()) != params.structure.M ||
      static_cast<int>(w.size()) != params.structure.M)
    throw ParseError(std::string(kSchemaLabel) + ": per-layer arrays must have M entries");
  for (int m = 0; m < params.structure.M; ++m) {
    params.alpha.push_back(vector_from_json(alpha[m], "alpha"));
    params.beta.push_back(matrix_from_json(beta[m], "beta"));
    params.W.push_back(matrix_from_json(w[m], "W"));
  }
  params.C = vector_from_json(field(doc, "C"), "C");
  params.bias = vector_from_json(field(doc, "bias"), "bias");
  const auto violations = validate(params);
  if (!violations.empty())
    throw ParseError(std::string(kSchemaLabel) + ": " + violations.front());
  return params;
}

void save_model(const FhmmParameters& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot write " + path.string());
  out << model_to_json(params) << "\n";
}

FhmmParameters load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

void save_dataset(const SequenceDataset& data, const std::filesystem::path& directory,
                  const std::string& stem) {
  std::filesystem::create_directories(directory);
  json manifest;
  manifest["D"] = data.dim();
  json files = json::array();
  for (int n = 0; n < data.num_sequences(); ++n) {
    const std::string name = stem + "_seq" + std::to_string(n) + ".csv";
    const MatrixXd& seq = data.sequences[n];
    std::ofstream out(directory / name);
    if (!out) throw std::runtime_error("save_dataset: cannot write " + name);
    out << "t";
    for (int d = 0; d < seq.rows(); ++d) out << ",x" << (d + 1);
    out << "\n";
    for (int t = 0; t < seq.cols(); ++t) {
      out << t;
      for (int d = 0; d < seq.rows(); ++d) out << "," << format_double(seq(d, t));
      out << "\n";
    }
    files.push_back({{"file", name}, {"length", seq.cols()}});
  }
  manifest["sequences"] = std::move(files);
  std::ofstream out(directory / (stem + "_manifest.json"));
  if (!out) throw std::runtime_error("save_dataset: cannot write manifest");
  out << manifest.dump(2) << "\n";
}

SequenceDataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("load_dataset: cannot read " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset manifest: not valid JSON: ") + e.what());
  }
  const int d = field(manifest, "D").get<int>();
  SequenceDataset data;
  const auto base = manifest_path.parent_path();
  for (const auto& entry : field(manifest, "sequences")) {
    const std::string name = entry.at("file").get<std::string>();
    const long length = entry.at("length").get<long>();
    std::ifstream csv(base / name);
    if (!csv) throw std::runtime_error("load_dataset: cannot read " + name);
    std::string line;
    std::getline(csv, line);  // header
    MatrixXd seq(d, length);
    for (long t = 0; t < length; ++t) {
      if (!std::getline(csv, line))
        throw ParseError("dataset csv " + name + ": fewer rows than manifest length");
      std::stringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');  // t column
      for (int dd = 0; dd < d; ++dd) {
        if (!std::getline(ss, cell, ','))
          throw ParseError("dataset csv " + name + ": short row at t=" + std::to_string(t));
        seq(dd, t) = std::stod(cell);
      }
    }
    data.sequences.push_back(std::move(seq));
  }
  return data;
}

void write_trace_csv(const FitReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot write " + path.string());
  out << "iter,G,expected_loglik,shrinkage,markov,entropy,penalty";
  for (int m = 0; m < report.init_layers; ++m) out << ",K_" << (m + 1);
  out << ",pruned_this_iter\n";
  for (const auto& rec : report.trace) {
    out << rec.iteration << "," << format_double(rec.terms.total) << ","
        << format_double(rec.terms.expected_loglik) << ","
        << format_double(rec.terms.shrinkage_term) << ","
        << format_double(rec.terms.markov_term) << ","
        << format_double(rec.terms.entropy) << ","
        << format_double(rec.terms.penalty_terms);
    for (int count : rec.live_counts) out << "," << count;
    out << "," << rec.pruned_this_iter << "\n";
  }
}

void write_fit_report_json(const FitReport& report, Variant variant,
                           const std::filesystem::path& path) {
  json doc;
  doc["variant"] = variant_name(variant);
  doc["fic_score"] = report.fic_score;
  doc["iterations_run"] = report.iterations_run;
  doc["converged"] = report.converged;
  doc["covariance_floor_warnings"] = report.covariance_floor_warnings;
  doc["final_K"] = report.final_params.structure.K;
  doc["final_M"] = report.final_params.structure.M;
  doc["init_layers"] = report.init_layers;
  doc["layer_origin"] = report.layer_origin;
  json events = json::array();
  for (const auto& ev : report.events)
    events.push_back({{"iteration", ev.iteration},
                      {"layer", ev.layer},
                      {"state", ev.state},
                      {"mass", ev.mass},
                      {"layer_removed", ev.layer_removed}});
  doc["prune_events"] = std::move(events);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_fit_report_json: cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace fabfhmm
