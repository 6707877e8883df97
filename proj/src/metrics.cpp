#include "samt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "samt/common.hpp"

namespace samt {

namespace {

constexpr int kInf = std::numeric_limits<int>::max();

struct HopcroftKarp {
  const std::vector<std::vector<int>>& adj;
  std::vector<int> match_l, match_r, dist;

  HopcroftKarp(int n_left, int n_right, const std::vector<std::vector<int>>& a)
      : adj(a), match_l(n_left, -1), match_r(n_right, -1), dist(n_left) {}

  bool bfs() {
    std::deque<int> q;
    for (size_t u = 0; u < match_l.size(); ++u) {
      if (match_l[u] == -1) {
        dist[u] = 0;
        q.push_back(static_cast<int>(u));
      } else {
        dist[u] = kInf;
      }
    }
    bool reachable_free = false;
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      for (int v : adj[u]) {
        int w = match_r[v];
        if (w == -1) {
          reachable_free = true;
        } else if (dist[w] == kInf) {
          dist[w] = dist[u] + 1;
          q.push_back(w);
        }
      }
    }
    return reachable_free;
  }

  bool dfs(int u) {
    for (int v : adj[u]) {
      int w = match_r[v];
      if (w == -1 || (dist[w] == dist[u] + 1 && dfs(w))) {
        match_l[u] = v;
        match_r[v] = u;
        return true;
      }
    }
    dist[u] = kInf;
    return false;
  }

  void run() {
    while (bfs()) {
      for (size_t u = 0; u < match_l.size(); ++u) {
        if (match_l[u] == -1) dfs(static_cast<int>(u));
      }
    }
  }
};

MatchScore score_from_counts(int matched, int n_ref, int n_est) {
  MatchScore s;
  s.matched = matched;
  s.n_ref = n_ref;
  s.n_est = n_est;
  if (n_ref == 0 && n_est == 0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  s.precision = n_est > 0 ? static_cast<double>(matched) / n_est : 0.0;
  s.recall = n_ref > 0 ? static_cast<double>(matched) / n_ref : 0.0;
  double pr = s.precision + s.recall;
  s.f1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

template <class Compatible>
MatchScore score_notes(std::span<const Annotation::Note> ref,
                       std::span<const Annotation::Note> est, Compatible&& ok) {
  std::vector<std::vector<int>> adj(ref.size());
  for (size_t i = 0; i < ref.size(); ++i) {
    for (size_t j = 0; j < est.size(); ++j) {
      if (ok(ref[i], est[j])) adj[i].push_back(static_cast<int>(j));
    }
  }
  HopcroftKarp hk(static_cast<int>(ref.size()), static_cast<int>(est.size()), adj);
  hk.run();
  int matched = 0;
  for (int v : hk.match_l) {
    if (v != -1) ++matched;
  }
  return score_from_counts(matched, static_cast<int>(ref.size()),
                           static_cast<int>(est.size()));
}

}  // namespace

std::vector<int> max_bipartite_matching(int n_left, int n_right,
                                        const std::vector<std::vector<int>>& adj) {
  check(static_cast<int>(adj.size()) == n_left, "adjacency size mismatch");
  for (const auto& row : adj) {
    for (int v : row) check(v >= 0 && v < n_right, "right index out of range");
  }
  HopcroftKarp hk(n_left, n_right, adj);
  hk.run();
  return hk.match_l;
}

MatchScore note_score_onset(std::span<const Annotation::Note> ref,
                            std::span<const Annotation::Note> est,
                            double onset_tol) {
  return score_notes(ref, est, [&](const auto& r, const auto& e) {
    return r.pitch == e.pitch && std::abs(r.onset - e.onset) <= onset_tol;
  });
}

MatchScore note_score_onset_offset(std::span<const Annotation::Note> ref,
                                   std::span<const Annotation::Note> est,
                                   double onset_tol, double offset_ratio,
                                   double offset_min_tol) {
  return score_notes(ref, est, [&](const auto& r, const auto& e) {
    if (r.pitch != e.pitch || std::abs(r.onset - e.onset) > onset_tol) return false;
    double tol = std::max(offset_min_tol, offset_ratio * (r.offset - r.onset));
    return std::abs(r.offset - e.offset) <= tol;
  });
}

PianoRoll notes_to_roll(std::span<const Annotation::Note> notes, int frames,
                        double frame_period) {
  check(frames >= 0, "negative frame count");
  PianoRoll roll;
  roll.frames = frames;
  roll.cells.assign(static_cast<size_t>(frames) * 128, 0);
  for (const auto& n : notes) {
    check(n.pitch >= 0 && n.pitch < 128, "pitch out of range");
    int t0 = std::clamp(time_to_frame(n.onset, frame_period), 0, frames);
    int t1 = std::clamp(time_to_frame(n.offset, frame_period), 0, frames);
    if (t1 == t0) t1 = std::min(t0 + 1, frames);  // a sounding note covers a frame
    for (int t = t0; t < t1; ++t) {
      roll.cells[static_cast<size_t>(t) * 128 + n.pitch] = 1;
    }
  }
  return roll;
}

MatchScore frame_score(const PianoRoll& ref, const PianoRoll& est) {
  check(ref.frames == est.frames, "piano rolls differ in length");
  int tp = 0, n_ref = 0, n_est = 0;
  for (size_t i = 0; i < ref.cells.size(); ++i) {
    bool r = ref.cells[i] != 0, e = est.cells[i] != 0;
    tp += (r && e);
    n_ref += r;
    n_est += e;
  }
  return score_from_counts(tp, n_ref, n_est);
}

MatchScore macro_average(std::span<const MatchScore> scores) {
  MatchScore avg;
  if (scores.empty()) return avg;
  for (const auto& s : scores) {
    avg.precision += s.precision;
    avg.recall += s.recall;
    avg.f1 += s.f1;
    avg.matched += s.matched;
    avg.n_ref += s.n_ref;
    avg.n_est += s.n_est;
  }
  avg.precision /= scores.size();
  avg.recall /= scores.size();
  avg.f1 /= scores.size();
  return avg;
}

}  // namespace samt
