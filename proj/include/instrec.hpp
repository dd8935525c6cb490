#pragma once

#include "instrec/audio_io.hpp"
#include "instrec/battery.hpp"
#include "instrec/dataset.hpp"
#include "instrec/error.hpp"
#include "instrec/evaluation.hpp"
#include "instrec/features.hpp"
#include "instrec/ferns.hpp"
#include "instrec/forest.hpp"
#include "instrec/rng.hpp"
#include "instrec/synth.hpp"
