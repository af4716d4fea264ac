#pragma once

// Umbrella header for the whole toolkit: differentiable graphs, piano-roll
// data model, harmonic features, evaluation metrics, the two GAN stages
// and their trainers.

#include "arranger/adam.hpp"
#include "arranger/arrangement_model.hpp"
#include "arranger/checkpoint.hpp"
#include "arranger/common.hpp"
#include "arranger/container.hpp"
#include "arranger/corpus.hpp"
#include "arranger/features.hpp"
#include "arranger/graph.hpp"
#include "arranger/io.hpp"
#include "arranger/leadsheet_model.hpp"
#include "arranger/metrics.hpp"
#include "arranger/midi.hpp"
#include "arranger/nn.hpp"
#include "arranger/pianoroll.hpp"
#include "arranger/tensor.hpp"
#include "arranger/training.hpp"
