"""Setup script."""

import setuptools

setuptools.setup(
    name='ev1test',
    version='0.1.0',
    packages=setuptools.find_packages(exclude=['tests']),
    package_data={'ev1test': ['config_default.yml']},
    python_requires='>=3.8',
    install_requires=[
        # Please note: Dependencies must also be added in `docs/conf.py` to `autodoc_mock_imports`.
        'cvxpy',
        'multimethod',
        'numpy',
        'pandas',
        'parameterized',  # For tests.
        'pyyaml',
        'ray[default]',
        'scipy>=1.6',  # For HiGHS in `scipy.optimize.linprog`.
    ],
    entry_points={
        'console_scripts': ['ev1test=ev1test.cli:main']
    }
)
