#pragma once

#include "cascade/analysis.hpp"
#include "cascade/cascade.hpp"
#include "cascade/chain.hpp"
#include "cascade/error.hpp"
#include "cascade/length_relax.hpp"
#include "cascade/ngram.hpp"
#include "cascade/potential_file.hpp"
#include "cascade/provider.hpp"
#include "cascade/semiring.hpp"
#include "cascade/stream.hpp"
#include "cascade/text.hpp"
#include "cascade/vocabulary.hpp"
