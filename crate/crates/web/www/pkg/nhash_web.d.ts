/* tslint:disable */
/* eslint-disable */

export class RegionExplorer {
    free(): void;
    [Symbol.dispose](): void;
    code_at(x: number, y: number): string;
    extent(): number;
    /**
     * `shape` is "moons", "rings" or "xor".
     */
    constructor(shape: string, n: number, seed: number);
    /**
     * Flattened `[x, y, label, ...]`.
     */
    points(): Float64Array;
    /**
     * `0xRRGGBB` per pixel, row-major, top row first.
     */
    region_colors(res: number): Uint32Array;
    /**
     * `[x0, y0, x1, y1, length, bounded]`, empty on a region boundary.
     */
    segment(x: number, y: number, angle: number): Float64Array;
    /**
     * `[points, distinct codes, redundancy, k-NN accuracy, train accuracy, regions in view]`.
     */
    stats(res: number): Float64Array;
    /**
     * Trains a fresh network; returns training accuracy.
     */
    train(width: number, layers: number, epochs: number, lr: number, seed: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_regionexplorer_free: (a: number, b: number) => void;
    readonly regionexplorer_code_at: (a: number, b: number, c: number) => [number, number];
    readonly regionexplorer_extent: (a: number) => number;
    readonly regionexplorer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly regionexplorer_points: (a: number) => [number, number];
    readonly regionexplorer_region_colors: (a: number, b: number) => [number, number];
    readonly regionexplorer_segment: (a: number, b: number, c: number, d: number) => [number, number];
    readonly regionexplorer_stats: (a: number, b: number) => [number, number];
    readonly regionexplorer_train: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
