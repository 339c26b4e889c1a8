#include "gped/artifacts.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "gped/errors.hpp"
#include "gped/textio.hpp"

namespace gped {

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string history_csv(const std::vector<HistoryRow>& rows, const std::string& manifest_hash) {
  std::ostringstream out;
  out << "# manifest_hash=" << manifest_hash << "\n";
  out << "sgld_iter,distill_iter,probe_loss,probe_metric\n";
  for (const HistoryRow& r : rows) {
    out << r.sgld_iter << ',' << r.distill_iter << ',' << format_g17(r.probe_loss) << ','
        << format_g17(r.probe_metric) << "\n";
  }
  return out.str();
}

std::string frontier_csv(const SearchResult& res, const std::string& manifest_hash) {
  std::ostringstream out;
  out << "# manifest_hash=" << manifest_hash << "\n";
  out << "arch_id,K1,K2,metric,flops,params,on_frontier\n";
  for (const SearchRecord& rec : res.records) {
    out << rec.arch.arch_id << ',' << format_g17(rec.arch.k1) << ',' << format_g17(rec.arch.k2)
        << ',';
    if (rec.ok) out << format_g17(rec.metric);
    out << ',' << rec.flops << ',' << rec.params << ',' << (rec.on_frontier ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string frontier_svg(const SearchResult& res, const std::string& manifest_hash,
                         const std::string& stamp) {
  constexpr double width = 640.0, height = 480.0;
  constexpr double x0 = 70.0, x1 = 610.0;  // plot box
  constexpr double y0 = 430.0, y1 = 40.0;

  double fmin = std::numeric_limits<double>::infinity(), fmax = -fmin;
  double mmin = fmin, mmax = -fmin;
  for (const SearchRecord& rec : res.records) {
    if (!rec.ok) continue;
    fmin = std::min(fmin, static_cast<double>(rec.flops));
    fmax = std::max(fmax, static_cast<double>(rec.flops));
    mmin = std::min(mmin, rec.metric);
    mmax = std::max(mmax, rec.metric);
  }
  const bool empty = !(fmin <= fmax);
  if (empty) {
    fmin = 0.0;
    fmax = 1.0;
    mmin = 0.0;
    mmax = 1.0;
  }
  if (fmax == fmin) fmax = fmin + 1.0;
  if (mmax == mmin) mmax = mmin + 1.0;

  const auto px = [&](double f) { return x0 + (f - fmin) / (fmax - fmin) * (x1 - x0); };
  const auto py = [&](double m) { return y0 + (m - mmin) / (mmax - mmin) * (y1 - y0); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<!-- manifest_hash=" << manifest_hash << " -->\n";
  if (!stamp.empty()) svg << "<!-- generated_at=" << stamp << " -->\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (x0 + x1) / 2.0 << "\" y=\"465\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">FLOPs</text>\n";
  svg << "<text x=\"18\" y=\"" << (y0 + y1) / 2.0 << "\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\" transform=\"rotate(-90 18 "
      << (y0 + y1) / 2.0 << ")\">metric</text>\n";
  svg << "<text x=\"" << x0 << "\" y=\"448\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"11\">" << fixed2(fmin) << "</text>\n";
  svg << "<text x=\"" << x1 << "\" y=\"448\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"11\">" << fixed2(fmax) << "</text>\n";
  svg << "<text x=\"" << x0 - 8.0 << "\" y=\"" << y0 + 4.0 << "\" text-anchor=\"end\" "
      << "font-family=\"sans-serif\" font-size=\"11\">" << fixed2(mmin) << "</text>\n";
  svg << "<text x=\"" << x0 - 8.0 << "\" y=\"" << y1 + 4.0 << "\" text-anchor=\"end\" "
      << "font-family=\"sans-serif\" font-size=\"11\">" << fixed2(mmax) << "</text>\n";

  if (!res.frontier_flops.empty()) {
    svg << "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < res.frontier_flops.size(); ++i) {
      const ParetoPoint& p = res.frontier_flops[i];
      if (i) svg << ' ';
      svg << fixed2(px(static_cast<double>(p.flops))) << ',' << fixed2(py(p.metric));
    }
    svg << "\"/>\n";
  }
  for (const SearchRecord& rec : res.records) {
    if (!rec.ok) continue;
    svg << "<circle cx=\"" << fixed2(px(static_cast<double>(rec.flops))) << "\" cy=\""
        << fixed2(py(rec.metric)) << "\" r=\"4\" fill=\""
        << (rec.on_frontier ? "#1f5fbf" : "#555555") << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string prune_report_json(const PruneReport& report, const std::string& manifest_hash) {
  nlohmann::json j;
  j["manifest_hash"] = manifest_hash;
  j["removed_groups"] = report.removed_groups;
  j["params_before"] = report.params_before;
  j["params_after"] = report.params_after;
  j["flops_before"] = report.flops_before;
  j["flops_after"] = report.flops_after;
  j["layers"] = nlohmann::json::array();
  for (const LayerPruneRecord& rec : report.layers) {
    j["layers"].push_back({{"layer", rec.layer},
                           {"removed_units", rec.removed_units},
                           {"dropped_bias_magnitude", rec.dropped_bias_magnitude}});
  }
  return j.dump(2);
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    require(!ec, ErrorKind::Format, "cannot create directory: " + p.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Format, "cannot open for writing: " + path);
  out << content;
  out.flush();
  require(out.good(), ErrorKind::Format, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Format, "cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace gped
