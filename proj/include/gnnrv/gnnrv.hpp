// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gnnrv/bounds.hpp>
#include <gnnrv/bruteforce.hpp>
#include <gnnrv/core.hpp>
#include <gnnrv/graph.hpp>
#include <gnnrv/instance.hpp>
#include <gnnrv/io.hpp>
#include <gnnrv/model.hpp>
#include <gnnrv/oracle.hpp>
#include <gnnrv/random_instance.hpp>
#include <gnnrv/search.hpp>
