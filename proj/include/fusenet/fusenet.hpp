#pragma once

#include "fusenet/autodiff.hpp"
#include "fusenet/checkpoint.hpp"
#include "fusenet/config.hpp"
#include "fusenet/error.hpp"
#include "fusenet/graph.hpp"
#include "fusenet/metrics.hpp"
#include "fusenet/models.hpp"
#include "fusenet/optim.hpp"
#include "fusenet/report.hpp"
#include "fusenet/rng.hpp"
#include "fusenet/synthgen.hpp"
#include "fusenet/tensor.hpp"
#include "fusenet/text_embed.hpp"
#include "fusenet/train.hpp"
