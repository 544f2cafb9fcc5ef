/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    density(): Float64Array;
    /**
     * L2 distance between the two normalised densities.
     */
    error(): number;
    /**
     * Collapses the swarm to one cell by a Born-rule draw and returns it.
     * The reference follows the same collapse.
     */
    measure(): number;
    /**
     * Two packets with opposite momenta `k` on a ring of `cells`, optionally
     * inside a harmonic well of the given strength.
     */
    constructor(cells: number, width: number, k: number, well: number, samples: number, seed: number, stochastic: boolean);
    oracle_density(): Float64Array;
    population(): number;
    /**
     * Advances both the swarm and the reference by `steps` steps.
     */
    step(steps: number): void;
    time(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_density: (a: number) => [number, number, number, number];
    readonly demo_error: (a: number) => [number, number, number];
    readonly demo_measure: (a: number) => [number, number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly demo_oracle_density: (a: number) => [number, number];
    readonly demo_population: (a: number) => number;
    readonly demo_step: (a: number, b: number) => [number, number];
    readonly demo_time: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
