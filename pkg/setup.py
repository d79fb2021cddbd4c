from setuptools import setup, find_packages

setup(
    name="inertia_zones",
    version="0.1",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        'pandas>=1.5',
        'numpy',
        'scipy',
        'matplotlib',
        'networkx',
        'python-dotenv',
        'pytest',
        'pytest-mock',
        'pytest-cov',
        'scikit-learn>=1.1'
    ],
    entry_points={
        'console_scripts': [
            'izone=app.cli:main'
        ]
    }
)
