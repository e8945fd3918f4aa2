import setuptools

with open('README.md', 'r') as fh:
    long_description = fh.read()

# This call to setup() does all the work
setuptools.setup(
    name="MKFPose",
    version="0.1.0",

    description="Upper-body 3D pose tracking from monocular joint detections with mixture Kalman filters",
    long_description=long_description,
    long_description_content_type="text/markdown",

    license="MIT license",

    # Metadata
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Topic :: Scientific/Engineering :: Image Recognition',
    ],
    # Packaging
    packages=setuptools.find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    python_requires='>=3.8',
    install_requires=["numpy>=1.20.1", "scipy>=1.6.0", "pandas>=1.5",
                      "scikit-learn>=0.24", "tqdm>=4.42.1", "pyyaml>=5.4"],
    extras_require={'tests': ["pytest>=6"]},
    entry_points={'console_scripts': ['mkfpose = mkfpose.cli:main']},
)
