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

import os
import os.path
import sys
from configparser import RawConfigParser


class CurvkitException(Exception):
    pass


class FormatError(CurvkitException):
    """ Malformed input file (PFM, manifest, model, intrinsics) """
    pass


class DivergenceError(CurvkitException):
    pass


def log(txt):
    if 'DEBUG' in os.environ:
        print(repr(txt), file=sys.stderr)


def pkg_path(*path_elements):
    return os.path.join(os.path.dirname(__file__), *path_elements)


def config_path(filename=None):
    # explicit > env > bundled defaults
    if filename:
        return filename

    if 'CURVKIT_CONFIG' in os.environ:
        return os.environ['CURVKIT_CONFIG']

    return pkg_path('curvkit.ini')


def parse_config(filename=None):
    " Returns {section: {key: raw string}} with the bundled defaults underneath "

    config = RawConfigParser()
    config.read(pkg_path('curvkit.ini'))

    path = config_path(filename)

    if path != pkg_path('curvkit.ini'):
        if not os.path.isfile(path):
            raise CurvkitException('Config file not found: %s' % path)

        config.read(path)

    return dict([(x, dict(config.items(x))) for x in config.sections()])


def to_bool(value):
    if isinstance(value, bool):
        return value

    return str(value).strip().lower() in ('1', 'true', 'yes', 'on')


def to_ints(value, sep=','):
    # "8,12,16" -> (8, 12, 16), also takes "160x120"
    if isinstance(value, (tuple, list)):
        return tuple(int(x) for x in value)

    return tuple(int(x) for x in str(value).replace('x', sep).split(sep) if x.strip())


def atomic_write(path, data):
    " bytes -> file, via temp file + rename so readers never see partial output "

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    tmp = os.path.join(directory, '.%s.tmp%s' % (os.path.basename(path), os.getpid()))

    with open(tmp, 'wb') as f:
        f.write(data)

    os.replace(tmp, path)
