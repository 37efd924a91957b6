#pragma once

#include <filesystem>
#include <string>

#include "fabfhmm/fab.hpp"
#include "fabfhmm/model.hpp"

namespace fabfhmm {

/// Model persistence: one JSON document with fields
/// {M, K, D, alpha, beta, W, C, bias}; matrices row-major, arrays indexed by
/// layer. Doubles round-trip bit-exactly.
void save_model(const FhmmParameters& params, const std::filesystem::path& path);
FhmmParameters load_model(const std::filesystem::path& path);

std::string model_to_json(const FhmmParameters& params);
FhmmParameters model_from_json(const std::string& text);

/// Dataset persistence: one CSV per sequence with header t,x1,...,xD plus a
/// manifest JSON listing files and lengths.
void save_dataset(const SequenceDataset& data, const std::filesystem::path& directory,
                  const std::string& stem);
SequenceDataset load_dataset(const std::filesystem::path& manifest_path);

/// Per-iteration trace with columns
/// iter,G,expected_loglik,shrinkage,markov,entropy,penalty,K_1..K_M,pruned_this_iter.
void write_trace_csv(const FitReport& report, const std::filesystem::path& path);

/// Fit summary (variant, score, structure, events) as JSON.
void write_fit_report_json(const FitReport& report, Variant variant,
                           const std::filesystem::path& path);

/// Raised on malformed or schema-incompatible documents.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace fabfhmm
