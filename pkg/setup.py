from datetime import datetime

from setuptools import setup

package_name = 'curvkit'

setup(
    name = package_name,
    version = datetime.now().strftime('%Y%m%d.%H%M'),
    description = 'Surface normals and principal curvatures from depth, multi-task losses and a toy two-stage network',
    long_description = open('README.md').read(),
    long_description_content_type = 'text/markdown',
    author = 'curvkit contributors',
    license = 'AGPL v3',
    packages = [package_name],
    install_requires = ['numpy', 'scipy', 'Pillow'],
    extras_require = {
        'full': ['diskcache'],
        'dev': ['pylint', 'pytest', 'pytest-cov'],
    },
    python_requires = '>=3.8',
    package_data = {package_name: ['curvkit.ini']},
    entry_points = {
        'console_scripts': [package_name + '=' + package_name + '.__main__:main'],
    },
)
