#include <algorithm>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

#include "mccsim/workloads.hpp"

namespace mccsim::workloads {

bool CsrGraph::valid() const {
  if (row_offsets.size() != std::size_t{n} + 1 || row_offsets.front() != 0) return false;
  if (!std::is_sorted(row_offsets.begin(), row_offsets.end())) return false;
  if (row_offsets.back() != col_indices.size()) return false;
  return std::all_of(col_indices.begin(), col_indices.end(), [this](std::uint32_t v) { return v < n; });
}

CsrGraph CsrGraph::from_edges(std::uint32_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw Error(Errc::OutOfRange, "edge endpoint beyond vertex count");
    if (u == v) continue;
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  CsrGraph g;
  g.n = n;
  g.row_offsets.reserve(std::size_t{n} + 1);
  g.row_offsets.push_back(0);
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    g.col_indices.insert(g.col_indices.end(), list.begin(), list.end());
    g.row_offsets.push_back(static_cast<std::uint32_t>(g.col_indices.size()));
  }
  return g;
}

CsrGraph CsrGraph::random_bounded(std::uint32_t n, std::uint32_t max_degree, std::mt19937_64& rng) {
  std::vector<std::set<std::uint32_t>> adj(n);
  std::uniform_int_distribution<std::uint32_t> pick(0, n - 1);
  const std::uint64_t attempts = std::uint64_t{n} * max_degree / 2;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::uint64_t i = 0; i < attempts; ++i) {
    const auto u = pick(rng), v = pick(rng);
    if (u == v || adj[u].size() >= max_degree || adj[v].size() >= max_degree || adj[u].count(v)) continue;
    adj[u].insert(v);
    adj[v].insert(u);
    edges.emplace_back(u, v);
  }
  return from_edges(n, edges);
}

CsrGraph CsrGraph::random_uniform(std::uint32_t n, std::uint64_t edges, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> pick(0, n - 1);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> list;
  list.reserve(edges);
  for (std::uint64_t i = 0; i < edges; ++i) list.emplace_back(pick(rng), pick(rng));
  return from_edges(n, list);
}

CsrGraph CsrGraph::parse_edge_list(std::istream& in) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::optional<std::uint32_t> declared;
  std::uint32_t max_id = 0;
  bool any = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      std::istringstream meta(line.substr(hash + 1));
      std::string key;
      std::uint64_t value = 0;
      if (meta >> key >> value && key == "vertices") declared = static_cast<std::uint32_t>(value);
      line.resize(hash);
    }
    std::istringstream ss(line);
    std::int64_t u = 0, v = 0;
    if (!(ss >> u)) continue;
    std::string extra;
    if (!(ss >> v) || u < 0 || v < 0 || u > 0xFFFF'FFFE || v > 0xFFFF'FFFE || (ss >> extra))
      throw Error(Errc::BadConfig, "edge list line " + std::to_string(lineno) + ": expected two vertex ids");
    edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
    max_id = std::max({max_id, static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)});
    any = true;
  }
  const std::uint32_t n = declared ? *declared : (any ? max_id + 1 : 0);
  return from_edges(n, edges);
}

std::vector<std::uint32_t> reach_oracle(const CsrGraph& g, std::uint32_t src, std::uint32_t hops) {
  std::vector<std::uint32_t> dist(g.n, ~0u);
  std::vector<std::uint32_t> frontier{src};
  dist[src] = 0;
  for (std::uint32_t d = 1; d <= hops && !frontier.empty(); ++d) {
    std::vector<std::uint32_t> next;
    for (auto v : frontier) {
      for (auto k = g.row_offsets[v]; k < g.row_offsets[v + 1]; ++k) {
        const auto u = g.col_indices[k];
        if (dist[u] == ~0u) {
          dist[u] = d;
          next.push_back(u);
        }
      }
    }
    frontier = std::move(next);
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t v = 0; v < g.n; ++v)
    if (v != src && dist[v] != ~0u) out.push_back(v);
  return out;
}

std::vector<std::uint32_t> intersect_sorted(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::vector<std::uint32_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<std::uint32_t> common_neighbors_oracle(const CsrGraph& g, std::uint32_t a, std::uint32_t b,
                                                   std::uint32_t hops) {
  return intersect_sorted(reach_oracle(g, a, hops), reach_oracle(g, b, hops));
}

Table Table::generate(std::size_t n, std::mt19937_64& rng) {
  Table t;
  t.rows.resize(n);
  // Each column is a scaled permutation so thresholds hit exact fractions.
  std::vector<std::uint64_t> perm(n);
  for (std::size_t c = 1; c < kRowWords; ++c) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) t.rows[i][c] = perm[i] * 10000 / n;
  }
  for (std::size_t i = 0; i < n; ++i) t.rows[i][0] = i;
  return t;
}

std::vector<std::uint8_t> Table::bytes() const {
  std::vector<std::uint8_t> out(rows.size() * kLineBytes);
  std::memcpy(out.data(), rows.data(), out.size());
  return out;
}

Table Table::from_bytes(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % kLineBytes != 0) throw Error(Errc::BadLength, "table size is not a multiple of 64 bytes");
  Table t;
  t.rows.resize(bytes.size() / kLineBytes);
  std::memcpy(t.rows.data(), bytes.data(), bytes.size());
  return t;
}

std::vector<std::uint64_t> select_oracle(const Table& t, unsigned column, std::uint64_t constant) {
  std::vector<std::uint64_t> out;
  for (const auto& r : t.rows)
    if (r.at(column) < constant) out.push_back(r[0]);
  return out;
}

std::vector<TraceEntry> make_trace(std::uint32_t pages, std::size_t len, std::mt19937_64& rng) {
  // Skewed: page p is drawn with weight proportional to 1 / (p + 1).
  std::vector<double> w(pages);
  for (std::uint32_t p = 0; p < pages; ++p) w[p] = 1.0 / (p + 1);
  std::discrete_distribution<std::uint32_t> page(w.begin(), w.end());
  std::uniform_int_distribution<std::uint32_t> line(0, 63);
  std::bernoulli_distribution write(0.3);
  std::vector<TraceEntry> out;
  out.reserve(len);
  for (std::size_t i = 0; i < len; ++i) out.push_back({page(rng), line(rng), write(rng)});
  return out;
}

std::vector<std::uint64_t> page_counts(const std::vector<TraceEntry>& trace, std::uint32_t pages) {
  std::vector<std::uint64_t> counts(pages, 0);
  for (const auto& e : trace) ++counts.at(e.page);
  return counts;
}

std::vector<std::pair<std::uint32_t, std::uint64_t>> top_k_oracle(const std::vector<std::uint64_t>& counts,
                                                                  std::size_t k) {
  std::vector<std::pair<std::uint32_t, std::uint64_t>> all;
  for (std::uint32_t p = 0; p < counts.size(); ++p) all.emplace_back(p, counts[p]);
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace mccsim::workloads
