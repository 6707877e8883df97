#pragma once

#include <span>
#include <vector>

#include "samt/vocab.hpp"

namespace samt {

struct MatchScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int matched = 0;
  int n_ref = 0;
  int n_est = 0;
};

// maximum-cardinality bipartite matching (Hopcroft-Karp); returns, for each
// left node, the matched right node or -1
std::vector<int> max_bipartite_matching(int n_left, int n_right,
                                        const std::vector<std::vector<int>>& adj);

// Notes match when pitches are equal and onsets differ by at most onset_tol.
// Both sides empty scores 1.0 across the board.
MatchScore note_score_onset(std::span<const Annotation::Note> ref,
                            std::span<const Annotation::Note> est,
                            double onset_tol = 0.05);

// Additionally requires offsets within max(offset_min_tol,
// offset_ratio * reference duration).
MatchScore note_score_onset_offset(std::span<const Annotation::Note> ref,
                                   std::span<const Annotation::Note> est,
                                   double onset_tol = 0.05,
                                   double offset_ratio = 0.2,
                                   double offset_min_tol = 0.05);

// Frame-level activity over a frames x 128 grid; cell (t, p) is on when
// some note of pitch p covers frame t under the shared rounding rule.
struct PianoRoll {
  std::vector<uint8_t> cells;  // row-major frames x 128
  int frames = 0;

  bool on(int t, int p) const { return cells[static_cast<size_t>(t) * 128 + p] != 0; }
};

PianoRoll notes_to_roll(std::span<const Annotation::Note> notes, int frames,
                        double frame_period);
MatchScore frame_score(const PianoRoll& ref, const PianoRoll& est);

// macro average: plain mean of each field over clips
MatchScore macro_average(std::span<const MatchScore> scores);

}  // namespace samt
