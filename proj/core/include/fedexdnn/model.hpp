#pragma once

#include <cstdint>
#include <vector>

#include "fedexdnn/encoder.hpp"
#include "fedexdnn/exdnn.hpp"

namespace fedexdnn {

// Everything a client uploads after local training. Deliberately carries
// only parameters and counts; raw segments never appear on this surface.
struct LocalModel {
    int client_id = 0;
    EncoderParams encoder;
    ExemplarSet exemplars;
    std::size_t sample_count = 0;
    double final_loss = 0.0;
    std::size_t epochs_run = 0;
    std::vector<double> epoch_losses;
};

struct GlobalModel {
    EncoderParams encoder;
    ExemplarSet exemplars;
    std::size_t round = 0;
};

}  // namespace fedexdnn
