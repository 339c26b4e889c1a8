#pragma once

#include <string>
#include <vector>

#include "gped/distill.hpp"
#include "gped/pruning.hpp"
#include "gped/search.hpp"

namespace gped {

// Artifact text builders. Same inputs give the same bytes, and every document
// leads with the fingerprint of the manifest that produced it: CSVs carry a
// `# manifest_hash=` comment, JSON a "manifest_hash" field, SVG an XML
// comment.

std::string history_csv(const std::vector<HistoryRow>& rows, const std::string& manifest_hash);

// one row per enumerated candidate: arch_id,K1,K2,metric,flops,params,on_frontier;
// failed candidates keep an empty metric cell and never join the frontier
std::string frontier_csv(const SearchResult& res, const std::string& manifest_hash);

// metric-vs-FLOPs scatter with the frontier polyline; pass a nonempty `stamp`
// to embed a generation timestamp, or "" for byte-reproducible output
std::string frontier_svg(const SearchResult& res, const std::string& manifest_hash,
                         const std::string& stamp);

std::string prune_report_json(const PruneReport& report, const std::string& manifest_hash);

// creates parent directories as needed
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace gped
