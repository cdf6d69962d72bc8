#include "aliasforge/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "aliasforge/rng.hpp"

namespace aliasforge {

FeatureMatrix TraceMatrix::features() const {
  FeatureMatrix m(static_cast<Eigen::Index>(rows.size()), kTraceFeatures);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = rows[i].cycles;
    m(r, 1) = rows[i].read_bytes;
    m(r, 2) = rows[i].write_bytes;
  }
  return m;
}

LayerSequence TraceMatrix::labels() const {
  LayerSequence seq;
  seq.reserve(rows.size());
  for (const auto& r : rows) seq.push_back(r.label);
  return seq;
}

KernelTrace trace_node(const LayerSpec& n, const std::vector<Shape>& inputs,
                       const TraceParams& p) {
  if (!n.out) throw TraceError("node " + std::to_string(n.id) + " is not shape-annotated");
  const double e = p.element_bytes;
  double in_elems = 0.0;
  for (const auto& s : inputs) in_elems += static_cast<double>(s.elements());
  const double out_elems = static_cast<double>(n.out->elements());
  const double weight_elems = static_cast<double>(n.expected_weight_count());

  KernelTrace row;
  row.node_id = n.id;
  row.label = n.kind;
  row.read_bytes = (in_elems + weight_elems) * e;
  row.write_bytes = out_elems * e;
  switch (n.kind) {
    case LayerKind::Conv2D: {
      const double macs = out_elems * n.k1 * n.k2 * (static_cast<double>(n.c) / n.groups);
      row.cycles = macs / p.macs_per_cycle;
      break;
    }
    case LayerKind::FullyConnected:
      row.cycles = static_cast<double>(n.c) * n.j / p.macs_per_cycle;
      break;
    default:
      row.cycles = out_elems * p.cycles_per_element;
      break;
  }
  return row;
}

TraceMatrix trace(const ModelGraph& graph, const TraceParams& params) {
  if (!graph.shapes_annotated())
    throw TraceError("trace requires a shape-annotated graph (run infer_shapes)");
  TraceMatrix tm;
  for (NodeId id : kernel_nodes(graph, params.sequence)) {
    const auto& n = graph.node(id);
    std::vector<Shape> in;
    for (NodeId src : n.inputs) in.push_back(*graph.node(src).out);
    tm.rows.push_back(trace_node(n, in, params));
  }
  if (params.noise_sigma > 0.0) {
    Rng rng(derive_seed(params.seed, "noise"));
    for (auto& r : tm.rows) {
      r.cycles *= std::exp(params.noise_sigma * rng.normal());
      r.read_bytes *= std::exp(params.noise_sigma * rng.normal());
      r.write_bytes *= std::exp(params.noise_sigma * rng.normal());
    }
  }
  return tm;
}

double kernel_latency(const KernelTrace& row, const TraceParams& params) {
  return std::max(row.cycles, (row.read_bytes + row.write_bytes) / params.bytes_per_cycle);
}

double total_latency(const TraceMatrix& tm, const TraceParams& params) {
  double total = 0.0;
  for (const auto& r : tm.rows) total += kernel_latency(r, params);
  return total;
}

namespace {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw TraceError("csv line " + std::to_string(line) + ": bad number \"" + std::string(s) + "\"");
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

constexpr std::string_view kCsvHeader = "node_id,label,cycles,read_bytes,write_bytes";

}  // namespace

std::string export_csv(const TraceMatrix& tm) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : tm.rows) {
    out += std::to_string(r.node_id);
    out += ',';
    if (tm.labeled) out += to_string(r.label);
    out += ',' + format_number(r.cycles) + ',' + format_number(r.read_bytes) + ',' +
           format_number(r.write_bytes) + '\n';
  }
  return out;
}

TraceMatrix import_csv(std::string_view text) {
  TraceMatrix tm;
  std::size_t line_no = 0;
  bool any_label = false;
  bool any_blank = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kCsvHeader) throw TraceError("csv: unexpected header \"" + std::string(line) + "\"");
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 5)
      throw TraceError("csv line " + std::to_string(line_no) + ": expected 5 fields");
    KernelTrace r;
    r.node_id = static_cast<NodeId>(parse_number(f[0], line_no));
    if (f[1].empty()) {
      any_blank = true;
    } else {
      const auto kind = parse_layer_kind(f[1]);
      if (!kind) throw TraceError("csv line " + std::to_string(line_no) + ": unknown label");
      r.label = *kind;
      any_label = true;
    }
    r.cycles = parse_number(f[2], line_no);
    r.read_bytes = parse_number(f[3], line_no);
    r.write_bytes = parse_number(f[4], line_no);
    tm.rows.push_back(r);
  }
  if (line_no == 0) throw TraceError("csv: empty document");
  if (any_label && any_blank) throw TraceError("csv: mixed labeled and unlabeled rows");
  tm.labeled = !any_blank;
  return tm;
}

TraceMatrix strip_labels(TraceMatrix tm) {
  tm.labeled = false;
  for (auto& r : tm.rows) r.label = LayerKind::Conv2D;
  return tm;
}

}  // namespace aliasforge
