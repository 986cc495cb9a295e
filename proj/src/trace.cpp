// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/trace.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace flashffn {

std::vector<IndexSet> ActivationTrace::layer_sets(std::uint32_t layer) const {
  if (layer >= n_layers) fail(ErrorKind::kUsage, "layer " + std::to_string(layer) + " out of range");
  std::vector<IndexSet> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t[layer]);
  return out;
}

void ActivationTrace::append(std::vector<IndexSet> per_layer) {
  if (per_layer.size() != n_layers) fail(ErrorKind::kDimension, "token has the wrong number of layers");
  tokens.push_back(std::move(per_layer));
}

void ActivationTrace::validate() const {
  if (tokens.empty()) fail(ErrorKind::kData, "empty trace");
  for (const auto& t : tokens) {
    if (t.size() != n_layers) fail(ErrorKind::kData, "trace token has the wrong number of layers");
    for (const auto& s : t) {
      if (!is_index_set(s)) fail(ErrorKind::kData, "trace set not sorted/unique");
      if (!s.empty() && s.back() >= d_ffn) fail(ErrorKind::kData, "trace index >= d_ffn");
    }
  }
}

void write_trace_jsonl(std::ostream& out, const ActivationTrace& trace) {
  nlohmann::json header{{"schema", "flashffn.trace/1"},
                        {"n_layers", trace.n_layers},
                        {"d_ffn", trace.d_ffn},
                        {"provenance", trace.provenance}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
    nlohmann::json line{{"t", t}, {"layers", trace.tokens[t]}};
    out << line.dump() << '\n';
  }
}

void write_trace_jsonl(const std::filesystem::path& path, const ActivationTrace& trace) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot create " + path.string());
  write_trace_jsonl(out, trace);
}

ActivationTrace read_trace_jsonl(std::istream& in) {
  ActivationTrace trace;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      if (!have_header) {
        if (j.value("schema", "") != "flashffn.trace/1") fail(ErrorKind::kData, "trace: missing or unknown schema header");
        trace.n_layers = j.at("n_layers").get<std::uint32_t>();
        trace.d_ffn = j.at("d_ffn").get<std::uint32_t>();
        trace.provenance = j.value("provenance", "");
        have_header = true;
        continue;
      }
      trace.append(j.at("layers").get<std::vector<IndexSet>>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, "trace line " + std::to_string(lineno) + ": " + e.what());
  }
  trace.validate();
  return trace;
}

ActivationTrace read_trace_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return read_trace_jsonl(in);
}

}  // namespace flashffn
