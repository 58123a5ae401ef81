#pragma once

#include "checkpoint.hpp"
#include "config.hpp"
#include "image_io.hpp"
#include "layers.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "strokes.hpp"
#include "synth.hpp"
#include "tensor.hpp"
#include "training.hpp"
#include "visualize.hpp"
#include "weights.hpp"
