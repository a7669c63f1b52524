#pragma once

#include <string>
#include <vector>

#include "clpc/audio.hpp"
#include "clpc/pitch.hpp"

namespace clpc {

// Glottal-cycle anchors for pitch-synchronous windowing.
struct PitchMarks {
    std::vector<int> position;    // sample indices, strictly increasing
    std::vector<bool> voiced;
    std::vector<double> period;   // tracked source period at the mark (samples)

    size_t size() const { return position.size(); }
};

// Mark placement: in voiced regions a dynamic program picks waveform peaks
// whose spacing stays near the tracked period; unvoiced regions fall back to
// uniform 10 ms marks.
PitchMarks detect_marks(const AudioBuffer& audio, const PitchContour& contour,
                        double voicing_threshold = 0.5);

// TD-PSOLA resynthesis: two-period Hann segments centered on analysis marks,
// re-placed at synthesis marks derived from the per-frame target pitch and
// stretch ratio, overlap-added and normalized by the window overlap sum.
// Unvoiced regions are time-scaled by segment repetition/omission only.
AudioBuffer psola_modify(const AudioBuffer& audio, const PitchMarks& marks,
                         const std::vector<double>& pitch_map_hz,
                         const std::vector<double>& time_map_ratio);

// Constant-ratio convenience wrapper used by the CLI.
AudioBuffer psola_shift_stretch(const AudioBuffer& audio, const PitchContour& contour,
                                double pitch_ratio, double time_ratio);

void save_marks_csv(const PitchMarks& marks, const std::string& path);

}  // namespace clpc
