#pragma once

#include "lineup/types.hpp"
#include "lineup/map_function.hpp"
#include "lineup/parallel.hpp"
#include "lineup/stats.hpp"
#include "lineup/linalg.hpp"
#include "lineup/genoprob.hpp"
#include "lineup/qtl_scan.hpp"
#include "lineup/decide.hpp"
#include "lineup/expr_align.hpp"
#include "lineup/knn.hpp"
#include "lineup/geno_align.hpp"
#include "lineup/dataset.hpp"
#include "lineup/relabel.hpp"
#include "lineup/plate.hpp"
#include "lineup/rng.hpp"
#include "lineup/simulator.hpp"
#include "lineup/io.hpp"
#include "lineup/manifest.hpp"
#include "lineup/pipeline.hpp"
