#pragma once

#include "labelaudit/error.hpp"
#include "labelaudit/random.hpp"
#include "labelaudit/corpus.hpp"
#include "labelaudit/encoder.hpp"
#include "labelaudit/metrics.hpp"
#include "labelaudit/classifier.hpp"
#include "labelaudit/parallel.hpp"
#include "labelaudit/context.hpp"
#include "labelaudit/inconsistency.hpp"
#include "labelaudit/discovery.hpp"
#include "labelaudit/adjudication.hpp"
#include "labelaudit/verification.hpp"
#include "labelaudit/bias.hpp"
#include "labelaudit/synth.hpp"
#include "labelaudit/digest.hpp"
#include "labelaudit/review.hpp"
#include "labelaudit/review_server.hpp"
#include "labelaudit/cli.hpp"
