#include "clpc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace clpc {

AudioBuffer resample_augment(const AudioBuffer& x, double ratio) {
    if (ratio <= 0.0) throw std::invalid_argument("augment ratio must be positive");
    bool known = false;
    for (double r : kAugmentRatios)
        if (std::abs(r - ratio) < 1e-9) known = true;
    if (!known)
        std::cerr << "warning: augment ratio " << ratio << " outside the standard set\n";

    // reinterpret at r*s, resample to s (duration /r, pitch *r), then to 16 kHz
    const AudioBuffer shifted =
        resample_from(x.samples, ratio * double(x.sample_rate), x.sample_rate);
    return resample(shifted, kTargetRate);
}

std::vector<AugmentManifestRow> augment_corpus(const std::string& dir_in,
                                               const std::string& dir_out) {
    if (!fs::is_directory(dir_in))
        throw std::runtime_error("augment: input is not a directory: " + dir_in);
    fs::create_directories(dir_out);

    std::vector<fs::path> inputs;
    for (const auto& entry : fs::directory_iterator(dir_in))
        if (entry.is_regular_file() && entry.path().extension() == ".wav")
            inputs.push_back(entry.path());
    std::sort(inputs.begin(), inputs.end());

    std::vector<AugmentManifestRow> manifest;
    for (const auto& path : inputs) {
        AudioBuffer audio;
        try {
            audio = load_wav(path.string());
        } catch (const std::exception& e) {
            std::cerr << "skipping " << path.string() << ": " << e.what() << '\n';
            continue;
        }
        for (size_t k = 0; k < kAugmentRatios.size(); ++k) {
            const double ratio = kAugmentRatios[k];
            const fs::path out_path =
                fs::path(dir_out) / (path.stem().string() + "_aug" + std::to_string(k) + ".wav");
            save_wav(resample_augment(audio, ratio), out_path.string());
            manifest.push_back({path.string(), ratio, out_path.string()});
        }
    }

    std::ofstream mf(fs::path(dir_out) / "manifest.csv", std::ios::trunc);
    if (!mf) throw std::runtime_error("cannot write manifest");
    mf << "source,ratio,output\n";
    for (const auto& row : manifest)
        mf << row.source << ',' << row.ratio << ',' << row.output << '\n';
    return manifest;
}

}  // namespace clpc
