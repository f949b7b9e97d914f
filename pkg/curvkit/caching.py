# This file is part of curvkit
#
# Copyright (C) 2026 curvkit contributors
#
# This program is free software: you can redistribute it and/or modify it under
# the terms of the GNU Affero General Public License as published by the Free
# Software Foundation, either version 3 of the License, or (at your option) any
# later version.
#
# This program is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS
# FOR A PARTICULAR PURPOSE. See the GNU Affero General Public License for more
# details.
#
# You should have received a copy of the GNU Affero General Public License along
# with this program. If not, see <https://www.gnu.org/licenses/>.

""" Caches for dense geometry results, keyed by input digest """

import hashlib
import os
import pickle
import time
from collections import OrderedDict

import numpy as np

from .geom import CurvatureMap, NormalMap

CACHE_SIZE = int(os.getenv('CACHE_SIZE', 64)) # max number of geometry results kept


class BaseCache(object):
    """ Dict-like store of packed geometry blobs, capped at `size` entries """

    def __init__(self, size=None):
        self.size = CACHE_SIZE if size is None else size

    def trim(self):
        pass

    def __contains__(self, key):
        try:
            self[key]

        except KeyError:
            return False

        else:
            return True


try:
    import sqlite3 # isort:skip
except ImportError:
    pass


class SQLiteCache(BaseCache):
    def __init__(self, path=':memory:', size=None):
        BaseCache.__init__(self, size)
        self.con = sqlite3.connect(path, check_same_thread=False)

        with self.con:
            self.con.execute('CREATE TABLE IF NOT EXISTS geometry (digest TEXT PRIMARY KEY, blob BLOB, stamp REAL)')

    def __del__(self):
        self.con.close()

    def __len__(self):
        return self.con.execute('SELECT COUNT(*) FROM geometry').fetchone()[0]

    def trim(self):
        if self.size < 0:
            return

        with self.con:
            self.con.execute('DELETE FROM geometry WHERE digest NOT IN (SELECT digest FROM geometry ORDER BY stamp DESC, rowid DESC LIMIT ?)', (self.size,))

    def __getitem__(self, key):
        row = self.con.execute('SELECT blob FROM geometry WHERE digest=?', (key,)).fetchone()

        if not row:
            raise KeyError(key)

        return row[0]

    def __setitem__(self, key, blob):
        with self.con:
            self.con.execute('INSERT OR REPLACE INTO geometry VALUES (?,?,?)', (key, blob, time.time()))


class CappedDict(OrderedDict, BaseCache):
    def __init__(self, size=None):
        OrderedDict.__init__(self)
        BaseCache.__init__(self, size)

    def trim(self):
        while self.size >= 0 and len(self) > self.size:
            self.popitem(last=False)

    def __setitem__(self, key, blob):
        # re-inserting moves the key to the young end
        if key in self:
            del self[key]

        OrderedDict.__setitem__(self, key, blob)


try:
    import diskcache # isort:skip
except ImportError:
    pass


class DiskCacheHandler(BaseCache):
    def __init__(self, directory=None, size=None):
        BaseCache.__init__(self, size)
        self.cache = diskcache.Cache(directory=directory, eviction_policy='least-recently-stored')

    def __del__(self):
        self.cache.close()

    def __len__(self):
        return len(self.cache)

    def trim(self):
        if self.size < 0:
            return

        while len(self.cache) > self.size:
            key, _ = self.cache.peekitem(last=False)
            del self.cache[key]

    def __getitem__(self, key):
        return self.cache[key]

    def __setitem__(self, key, blob):
        self.cache.set(key, blob)


def geometry_key(depth, intr, spec, clamp):
    " sha1 over everything dense_geometry reads "

    h = hashlib.sha1()
    h.update(np.ascontiguousarray(depth.data, dtype='<f8').tobytes())
    h.update(np.packbits(depth.mask).tobytes())
    h.update(repr(sorted(intr.as_dict().items())).encode())
    h.update(repr(float(clamp)).encode())

    for part in spec.digest_parts():
        h.update(part)

    return h.hexdigest()


def pack_geometry(normals, curv):
    return pickle.dumps((normals.data, curv.k1, curv.k2, curv.mask), protocol=4)


def unpack_geometry(blob):
    normals, k1, k2, mask = pickle.loads(blob)
    return NormalMap(normals, mask), CurvatureMap(k1, k2, mask)


if 'CACHE' in os.environ:
    if os.environ['CACHE'] == 'sqlite':
        default_cache = SQLiteCache(
            os.getenv('SQLITE_PATH', ':memory:')
        )

    elif os.environ['CACHE'] == 'diskcache':
        default_cache = DiskCacheHandler(
            directory = os.getenv('DISKCACHE_DIR', '/tmp/curvkit-diskcache'),
        )

    else:
        default_cache = CappedDict()

else:
    default_cache = CappedDict()
