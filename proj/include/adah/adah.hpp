#pragma once

#include "adah/config.hpp"
#include "adah/data.hpp"
#include "adah/diffcore.hpp"
#include "adah/embeddings.hpp"
#include "adah/error.hpp"
#include "adah/hashindex.hpp"
#include "adah/io.hpp"
#include "adah/losses.hpp"
#include "adah/nets.hpp"
#include "adah/pseudo.hpp"
#include "adah/trainer.hpp"
