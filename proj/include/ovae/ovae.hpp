#pragma once

#include "ovae/adequacy.hpp"
#include "ovae/config.hpp"
#include "ovae/data.hpp"
#include "ovae/error.hpp"
#include "ovae/latent_is.hpp"
#include "ovae/model.hpp"
#include "ovae/network_io.hpp"
#include "ovae/nn.hpp"
#include "ovae/parallel.hpp"
#include "ovae/pipeline.hpp"
#include "ovae/qp.hpp"
#include "ovae/rng.hpp"
#include "ovae/stats.hpp"
