from setuptools import setup, find_packages

setup(
    name="sme_corrfit",
    version="0.1.0",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "torch",
        "pydantic>=2",
        "joblib",
    ],
    extras_require={"test": ["pytest"]},
    entry_points={
        "console_scripts": [
            "sme-corrfit=sme_corrfit.pipeline.commands:main",
        ],
    },
)
