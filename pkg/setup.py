import setuptools

URL = ""
DESCRIPTION = "Spin-vortex-induced loop current qubits on the CuO2 plane."
LONG_DESCRIPTION = f"""\
{DESCRIPTION}. For more information, see the [project repository]({URL}).
"""

setuptools.setup(
    name="svilc",
    version="0.0.1",
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    url=URL,
    packages=["svilc"],
    python_requires=">=3.9",
    install_requires=[
        "joblib",
        "loguru",
        "numpy",
        "pandas>=1.5",
        "pyyaml",
        "scipy>=1.4",
    ],
    entry_points={
        "console_scripts": [
            "svilc=svilc.cli:main",
        ]
    },
    license="MIT",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
