#pragma once

#include "blockid/error.hpp"
#include "blockid/polynomial.hpp"
#include "blockid/transfer_function.hpp"
#include "blockid/static_nl.hpp"
#include "blockid/signals.hpp"
#include "blockid/block_graph.hpp"
#include "blockid/simulate.hpp"
#include "blockid/linearize.hpp"
#include "blockid/estimate.hpp"
#include "blockid/rootlocus.hpp"
#include "blockid/discriminate.hpp"
#include "blockid/config.hpp"
#include "blockid/pipeline.hpp"
