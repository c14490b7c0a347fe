#pragma once

#include "topiclens/corpus.hpp"
#include "topiclens/error.hpp"
#include "topiclens/evaluation.hpp"
#include "topiclens/matrix.hpp"
#include "topiclens/parallel.hpp"
#include "topiclens/sampler.hpp"
#include "topiclens/stats.hpp"
#include "topiclens/synth.hpp"

namespace topiclens {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace topiclens
