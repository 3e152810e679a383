from setuptools import setup, find_packages

setup(
    name='reranksearch',
    version='0.1.0',
    description='Exact vector search with LLM-assisted reranking',
    author='Your Name',
    author_email='jkschin@mit.edu',
    url='https://github.com/jkschin/reranksearch',
    packages=find_packages(exclude=['tests', 'tests.*']),
    package_data={'reranksearch': ['data/*.csv', 'data/*.json']},
    python_requires='>=3.8',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Developers',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],
    install_requires=[
        "numpy",
        "requests",
        "tenacity",
        "scipy",
        "matplotlib",
        "colorcet",
        "scikit-learn",
        "pillow",
        "seaborn"
    ],
    extras_require={
        "test": ["hypothesis"],
    },
    entry_points={
        "console_scripts": ["reranksearch=reranksearch.cli:main"],
    },
)
