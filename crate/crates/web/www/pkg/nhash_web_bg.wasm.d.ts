/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_regionexplorer_free: (a: number, b: number) => void;
export const regionexplorer_code_at: (a: number, b: number, c: number) => [number, number];
export const regionexplorer_extent: (a: number) => number;
export const regionexplorer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const regionexplorer_points: (a: number) => [number, number];
export const regionexplorer_region_colors: (a: number, b: number) => [number, number];
export const regionexplorer_segment: (a: number, b: number, c: number, d: number) => [number, number];
export const regionexplorer_stats: (a: number, b: number) => [number, number];
export const regionexplorer_train: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
